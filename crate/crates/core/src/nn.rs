//! Dense layers, parameter traversal, and an Adam optimizer.
//!
//! Gradients are stored in a value of the same type as the model, so any
//! model that can walk its parameters in a fixed order can be trained with
//! [`Adam`].

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::math::sqrt;

/// Walks every trainable parameter slice in a fixed order.
pub trait Parameters {
    fn visit(&self, f: &mut dyn FnMut(&[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |s| n += s.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(&mut |s| out.extend_from_slice(s));
        out
    }

    /// Overwrite parameters from a flat vector produced by [`flatten`](Self::flatten).
    fn assign(&mut self, flat: &[f64]) {
        let mut at = 0;
        self.visit_mut(&mut |s| {
            s.copy_from_slice(&flat[at..at + s.len()]);
            at += s.len();
        });
    }

    fn zero(&mut self) {
        self.visit_mut(&mut |s| s.iter_mut().for_each(|x| *x = 0.0));
    }

    /// `self += scale * other`, parameter-wise.
    fn accumulate(&mut self, other: &Self, scale: f64)
    where
        Self: Sized,
    {
        let flat = other.flatten();
        let mut at = 0;
        self.visit_mut(&mut |s| {
            for x in s.iter_mut() {
                *x += scale * flat[at];
                at += 1;
            }
        });
    }
}

/// Fully connected layer `y = W x + b`, `W` row-major `outputs x inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform init with bound `gain * sqrt(6 / (in + out))`; bias zero.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        let bound = gain * sqrt(6.0 / (inputs + outputs) as f64);
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        Dense {
            inputs,
            outputs,
            weight: (0..inputs * outputs).map(|_| dist.sample(rng)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        let mut y = self.bias.clone();
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
            *yo += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], grad_out: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut gx = vec![0.0; self.inputs];
        for (o, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            let row = o * self.inputs;
            for i in 0..self.inputs {
                grad.weight[row + i] += g * x[i];
                gx[i] += g * self.weight[row + i];
            }
        }
        gx
    }

    pub fn zeros_like(&self) -> Dense {
        Dense::zeros(self.inputs, self.outputs)
    }
}

impl Parameters for Dense {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub const LEAKY_SLOPE: f64 = 0.01;

#[inline]
pub fn leaky_relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(parameter_count: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; parameter_count],
            v: vec![0.0; parameter_count],
            t: 0,
        }
    }

    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P, lr: f64) {
        let g = grads.flatten();
        debug_assert_eq!(g.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let (m, v) = (&mut self.m, &mut self.v);
        let mut at = 0;
        params.visit_mut(&mut |s| {
            for p in s.iter_mut() {
                let gi = g[at];
                m[at] = b1 * m[at] + (1.0 - b1) * gi;
                v[at] = b2 * v[at] + (1.0 - b2) * gi * gi;
                let mh = m[at] / c1;
                let vh = v[at] / c2;
                *p -= lr * mh / (sqrt(vh) + eps);
                at += 1;
            }
        });
    }
}

/// Step decay: `base * factor^(epoch / every)`.
pub fn step_decay(base: f64, factor: f64, every: usize, epoch: usize) -> f64 {
    let k = if every == 0 { 0 } else { epoch / every };
    base * libm::pow(factor, k as f64)
}

/// Central-difference gradient of `loss` over every parameter of `model`.
/// Test helper shared by the gradient checks.
pub fn numeric_gradient<P: Parameters + Clone>(
    model: &P,
    eps: f64,
    mut loss: impl FnMut(&P) -> f64,
) -> Vec<f64> {
    let base = model.flatten();
    let mut probe = model.clone();
    let mut out = vec![0.0; base.len()];
    let mut work = base.clone();
    for i in 0..base.len() {
        work[i] = base[i] + eps;
        probe.assign(&work);
        let up = loss(&probe);
        work[i] = base[i] - eps;
        probe.assign(&work);
        let down = loss(&probe);
        work[i] = base[i];
        out[i] = (up - down) / (2.0 * eps);
    }
    out
}
