//! Procedural colored test clouds: a handful of closed surfaces, each with a
//! texture that differs from one side of the object to the other so that
//! projections depend on the viewpoint.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::PointCloud;
use crate::math::{cos, floor, sin, sqrt, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Sphere,
    Torus,
    Box,
    Blob,
    Cylinder,
}

impl Shape {
    pub const ALL: [Shape; 5] = [Shape::Sphere, Shape::Torus, Shape::Box, Shape::Blob, Shape::Cylinder];
}

fn sphere_dir<R: Rng>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.random_range(-1.0..1.0);
    let t: f64 = rng.random_range(0.0..2.0 * PI);
    let r = sqrt(1.0 - z * z);
    Vec3::new(r * cos(t), r * sin(t), z)
}

fn surface_point<R: Rng>(shape: Shape, rng: &mut R, bumps: &[(Vec3, f64)]) -> Vec3 {
    match shape {
        Shape::Sphere => sphere_dir(rng),
        Shape::Blob => {
            let d = sphere_dir(rng);
            let r = 1.0 + bumps.iter().map(|(c, a)| a * libm::exp(-8.0 * (d - *c).dot(d - *c))).sum::<f64>();
            d * r
        }
        Shape::Torus => {
            // area-weighted sampling by rejection on the tube angle
            let (big, small) = (0.75, 0.3);
            loop {
                let u: f64 = rng.random_range(0.0..2.0 * PI);
                let v: f64 = rng.random_range(0.0..2.0 * PI);
                let w = (big + small * cos(v)) / (big + small);
                if rng.random::<f64>() <= w {
                    return Vec3::new((big + small * cos(v)) * cos(u), (big + small * cos(v)) * sin(u), small * sin(v));
                }
            }
        }
        Shape::Box => {
            let half = [1.0, 0.7, 0.5];
            let areas = [half[1] * half[2], half[0] * half[2], half[0] * half[1]];
            let total: f64 = areas.iter().sum();
            let mut pick = rng.random_range(0.0..total);
            let mut axis = 0;
            while pick > areas[axis] && axis < 2 {
                pick -= areas[axis];
                axis += 1;
            }
            let mut p = [
                rng.random_range(-half[0]..half[0]),
                rng.random_range(-half[1]..half[1]),
                rng.random_range(-half[2]..half[2]),
            ];
            p[axis] = if rng.random::<bool>() { half[axis] } else { -half[axis] };
            Vec3::from_array(p)
        }
        Shape::Cylinder => {
            let t: f64 = rng.random_range(0.0..2.0 * PI);
            let z: f64 = rng.random_range(-1.0..1.0);
            if rng.random::<f64>() < 0.25 {
                let r = sqrt(rng.random::<f64>()) * 0.6;
                Vec3::new(r * cos(t), r * sin(t), if z > 0.0 { 1.0 } else { -1.0 })
            } else {
                Vec3::new(0.6 * cos(t), 0.6 * sin(t), z)
            }
        }
    }
}

/// Texture parameters: each octant-like region of the object gets its own
/// pattern, from flat color to fine stripes.
struct Texture {
    base: [[f64; 3]; 4],
    freq: [f64; 4],
    axis: [Vec3; 4],
}

impl Texture {
    fn random<R: Rng>(rng: &mut R) -> Self {
        let mut base = [[0.0; 3]; 4];
        let mut freq = [0.0; 4];
        let mut axis = [Vec3::ZERO; 4];
        for k in 0..4 {
            for c in 0..3 {
                base[k][c] = rng.random_range(50.0..205.0);
            }
            // region 0 stays flat, the others get increasingly busy patterns
            freq[k] = if k == 0 { 0.0 } else { rng.random_range(2.0..10.0) * k as f64 };
            axis[k] = sphere_dir(rng);
        }
        Texture { base, freq, axis }
    }

    fn color(&self, p: Vec3) -> [u8; 3] {
        let region = (p.x > 0.0) as usize + 2 * (p.y > 0.0) as usize;
        let f = self.freq[region];
        let s = if f == 0.0 {
            0.0
        } else {
            let t = p.dot(self.axis[region]) * f;
            // stripes with a soft checker modulation
            let stripe = if floor(t) as i64 % 2 == 0 { 1.0 } else { -1.0 };
            0.6 * stripe + 0.4 * sin(3.0 * p.z * f)
        };
        let mut out = [0u8; 3];
        for c in 0..3 {
            out[c] = (self.base[region][c] + 45.0 * s).clamp(0.0, 255.0) as u8;
        }
        out
    }
}

/// Deterministic textured surface sample of `n` points.
pub fn synthetic_cloud(index: usize, seed: u64, n: usize) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9));
    let shape = Shape::ALL[index % Shape::ALL.len()];
    let bumps: Vec<(Vec3, f64)> = (0..5).map(|_| (sphere_dir(&mut rng), rng.random_range(-0.25..0.35))).collect();
    let tex = Texture::random(&mut rng);
    let scale = Vec3::new(rng.random_range(0.8..1.2), rng.random_range(0.8..1.2), rng.random_range(0.8..1.2));
    let mut points = Vec::with_capacity(n);
    let mut colors = Vec::with_capacity(n);
    for _ in 0..n {
        let p = surface_point(shape, &mut rng, &bumps);
        colors.push(tex.color(p));
        points.push(Vec3::new(p.x * scale.x, p.y * scale.y, p.z * scale.z));
    }
    PointCloud::new(format!("synth{index:02}"), points, colors).expect("nonempty synthetic cloud")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_finite() {
        for i in 0..5 {
            let a = synthetic_cloud(i, 3, 500);
            assert_eq!(a, synthetic_cloud(i, 3, 500));
            assert_eq!(a.len(), 500);
            assert!(a.points().iter().all(|p| p.is_finite() && p.norm() < 3.0));
        }
        assert_ne!(synthetic_cloud(0, 3, 100), synthetic_cloud(0, 4, 100));
    }
}
