//! Content-aware viewpoint generation.
//!
//! Two branches (geometry, texture) turn fixed token statistics into
//! multi-scale features, condition them on the default viewpoint through a
//! focus map and single-head self-attention, and a shared head places the
//! generated viewpoint on the default view's region plane.

mod multiscale;
mod train;

pub use multiscale::{
    assemble, extract_multiscale, farthest_point_sample, stage_radius, symmetric_eigenvalues, token_stats, Channel,
    MultiScaleFeatures, StageMaps, TokenStats, BASE_RADIUS_FRACTION, GEOMETRY_STATS, STAGES, TEXTURE_STATS,
};
pub use train::{
    cavgn_objective, cavgn_objective_value, record_label, record_stats, train_cavgn, train_cavgn_with_stats, CavgnEpoch,
    TrainingRow,
};

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{invalid, Error, Result};
use crate::eval::ViewpointPolicy;
use crate::geometry::ViewSetup;
use crate::math::{exp, sqrt, Vec3};
use crate::nn::{leaky_relu, relu, Dense, Parameters, LEAKY_SLOPE};

/// Length of the viewpoint encoding fed to the focus module.
pub const VIEW_ENCODING: usize = 6;
pub const FOCUS_LAYERS: usize = 3;
pub const HEAD_WIDTHS: [usize; 3] = [32, 32, 16];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavgnHyper {
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub split: f64,
    pub seed: u64,
    pub tokens: usize,
    pub width: usize,
    pub embed_width: usize,
    pub pooling: Pooling,
}

impl Default for CavgnHyper {
    fn default() -> Self {
        CavgnHyper {
            learning_rate: 1e-5,
            decay_factor: 0.2,
            decay_every: 2,
            epochs: 30,
            batch_size: 1,
            split: 0.8,
            seed: 0,
            tokens: 64,
            width: 32,
            embed_width: 8,
            pooling: Pooling::Max,
        }
    }
}

/// Single-head scaled dot-product attention with a residual add.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attention {
    pub query: Dense,
    pub key: Dense,
    pub value: Dense,
}

impl Parameters for Attention {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.query.visit(f);
        self.key.visit(f);
        self.value.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.query.visit_mut(f);
        self.key.visit_mut(f);
        self.value.visit_mut(f);
    }
}

/// Focus layers and attention of one channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub stages: StageMaps,
    pub focus: Vec<Dense>,
    pub attention: Attention,
}

impl Parameters for Branch {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.stages.maps.iter().for_each(|m| m.visit(f));
        self.focus.iter().for_each(|m| m.visit(f));
        self.attention.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.stages.maps.iter_mut().for_each(|m| m.visit_mut(f));
        self.focus.iter_mut().for_each(|m| m.visit_mut(f));
        self.attention.visit_mut(f);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavgnModel {
    pub geometry: Branch,
    pub texture: Branch,
    pub view_embedding: Dense,
    pub head: Vec<Dense>,
    pub seed: u64,
    pub hyper: CavgnHyper,
}

impl Parameters for CavgnModel {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.geometry.visit(f);
        self.texture.visit(f);
        self.view_embedding.visit(f);
        self.head.iter().for_each(|m| m.visit(f));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.geometry.visit_mut(f);
        self.texture.visit_mut(f);
        self.view_embedding.visit_mut(f);
        self.head.iter_mut().for_each(|m| m.visit_mut(f));
    }
}

fn branch_init(channel: Channel, hp: &CavgnHyper, rng: &mut ChaCha8Rng) -> Branch {
    let d = channel.width();
    let mut stages = StageMaps::zeros(d);
    for m in &mut stages.maps {
        *m = Dense::init(d, d, 0.5, rng);
    }
    let input = 2 * STAGES * d + hp.embed_width;
    let focus = (0..FOCUS_LAYERS)
        .map(|l| Dense::init(if l == 0 { input } else { hp.width }, hp.width, 1.0, rng))
        .collect();
    let attention = Attention {
        query: Dense::init(hp.width, hp.width, 1.0, rng),
        key: Dense::init(hp.width, hp.width, 1.0, rng),
        value: Dense::init(hp.width, hp.width, 1.0, rng),
    };
    Branch {
        stages,
        focus,
        attention,
    }
}

impl CavgnModel {
    /// Random weights everywhere except the last head layer, which starts at
    /// zero so an untrained model returns the default viewpoint.
    pub fn init(seed: u64, hyper: CavgnHyper) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let geometry = branch_init(Channel::Geometry, &hyper, &mut rng);
        let texture = branch_init(Channel::Texture, &hyper, &mut rng);
        let view_embedding = Dense::init(VIEW_ENCODING, hyper.embed_width, 1.0, &mut rng);
        let mut head = Vec::new();
        let mut prev = 2 * hyper.width;
        for &w in &HEAD_WIDTHS {
            head.push(Dense::init(prev, w, 1.0, &mut rng));
            prev = w;
        }
        head.push(Dense::zeros(prev, 2));
        CavgnModel {
            geometry,
            texture,
            view_embedding,
            head,
            seed,
            hyper,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero();
        z
    }

    /// Multi-scale features of both channels under this model's stage maps.
    pub fn features(&self, stats: &TokenStats) -> (MultiScaleFeatures, MultiScaleFeatures) {
        (
            assemble(&stats.geometry, &self.geometry.stages),
            assemble(&stats.texture, &self.texture.stages),
        )
    }

    /// Generated viewpoint for a cloud summarised by `stats`.
    pub fn predict(&self, stats: &TokenStats, view: &ViewSetup) -> Result<Vec3> {
        let (g, t) = self.features(stats);
        let c = constrain(self, &g, &t, view)?;
        Ok(generate_viewpoint(self, &c.fused, view))
    }
}

impl ViewpointPolicy for CavgnModel {
    fn viewpoint(&self, cloud: &PointCloud, view: &ViewSetup) -> Result<Vec3> {
        let stats = token_stats(cloud, self.hyper.tokens.min(cloud.len()))?;
        self.predict(&stats, view)
    }
}

/// Unit direction, in-plane position over `h`, and `face_index / 5`.
pub fn view_encoding(view: &ViewSetup) -> [f64; VIEW_ENCODING] {
    let h = view.region_half_extent;
    let (u, v) = view.plane_coords(view.viewpoint);
    let d = view.direction.normalized().unwrap_or(view.direction);
    [d.x, d.y, d.z, u / h, v / h, view.face_index as f64 / 5.0]
}

/// Row-wise softmax of `q k^T / sqrt(width)`.
pub fn attention_weights(q: &[Vec<f64>], k: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let width = q.first().map_or(1, |r| r.len().max(1));
    let scale = 1.0 / sqrt(width as f64);
    q.iter()
        .map(|qi| {
            let s: Vec<f64> = k.iter().map(|kj| scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>()).collect();
            let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = s.iter().map(|x| exp(x - m)).collect();
            let z: f64 = e.iter().sum();
            e.into_iter().map(|x| x / z).collect()
        })
        .collect()
}

/// Refined tokens of both branches and the fused, mean-pooled vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstrainedFeatures {
    pub geometry: Vec<Vec<f64>>,
    pub texture: Vec<Vec<f64>>,
    pub fused: Vec<f64>,
    pub view: ViewSetup,
}

#[derive(Clone, Debug)]
struct BranchTrace {
    features: MultiScaleFeatures,
    inputs: Vec<Vec<Vec<f64>>>,
    pre: Vec<Vec<Vec<f64>>>,
    focused: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    refined: Vec<Vec<f64>>,
}

fn branch_forward(branch: &Branch, features: MultiScaleFeatures, embed: &[f64]) -> BranchTrace {
    let mut x: Vec<Vec<f64>> = features
        .expanded
        .iter()
        .map(|row| {
            let mut r = row.clone();
            r.extend_from_slice(embed);
            r
        })
        .collect();
    let mut inputs = Vec::with_capacity(branch.focus.len());
    let mut pre = Vec::with_capacity(branch.focus.len());
    for layer in &branch.focus {
        let z: Vec<Vec<f64>> = x.iter().map(|t| layer.forward(t)).collect();
        let a = z.iter().map(|t| t.iter().map(|&v| leaky_relu(v)).collect()).collect();
        inputs.push(x);
        pre.push(z);
        x = a;
    }
    let focused = x;
    let att = &branch.attention;
    let q: Vec<Vec<f64>> = focused.iter().map(|t| att.query.forward(t)).collect();
    let k: Vec<Vec<f64>> = focused.iter().map(|t| att.key.forward(t)).collect();
    let v: Vec<Vec<f64>> = focused.iter().map(|t| att.value.forward(t)).collect();
    let weights = attention_weights(&q, &k);
    let refined = focused
        .iter()
        .zip(&weights)
        .map(|(f, w)| {
            let mut out = f.clone();
            for (ws, vs) in w.iter().zip(&v) {
                out.iter_mut().zip(vs).for_each(|(o, x)| *o += ws * x);
            }
            out
        })
        .collect();
    BranchTrace {
        features,
        inputs,
        pre,
        focused,
        q,
        k,
        v,
        weights,
        refined,
    }
}

fn mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let width = rows.first().map_or(0, |r| r.len());
    let mut out = vec![0.0; width];
    for r in rows {
        out.iter_mut().zip(r).for_each(|(o, x)| *o += x);
    }
    let n = rows.len().max(1) as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

#[derive(Clone, Debug)]
struct Trace {
    encoding: [f64; VIEW_ENCODING],
    embed_pre: Vec<f64>,
    geometry: BranchTrace,
    texture: BranchTrace,
    fused: Vec<f64>,
}

fn check_tokens(g: &MultiScaleFeatures, t: &MultiScaleFeatures) -> Result<()> {
    if g.token_count() != t.token_count() {
        return Err(invalid("geometry and texture token counts differ"));
    }
    if g.token_count() == 0 {
        return Err(invalid("no tokens"));
    }
    Ok(())
}

fn trace(model: &CavgnModel, g: MultiScaleFeatures, t: MultiScaleFeatures, view: &ViewSetup) -> Result<Trace> {
    check_tokens(&g, &t)?;
    let encoding = view_encoding(view);
    let embed_pre = model.view_embedding.forward(&encoding);
    let embed: Vec<f64> = embed_pre.iter().map(|&x| relu(x)).collect();
    let geometry = branch_forward(&model.geometry, g, &embed);
    let texture = branch_forward(&model.texture, t, &embed);
    let mut fused = mean_rows(&geometry.refined);
    fused.extend(mean_rows(&texture.refined));
    Ok(Trace {
        encoding,
        embed_pre,
        geometry,
        texture,
        fused,
    })
}

/// Condition both channels on `view` and fuse them.
pub fn constrain(
    model: &CavgnModel,
    g: &MultiScaleFeatures,
    t: &MultiScaleFeatures,
    view: &ViewSetup,
) -> Result<ConstrainedFeatures> {
    let tr = trace(model, g.clone(), t.clone(), view)?;
    Ok(ConstrainedFeatures {
        geometry: tr.geometry.refined,
        texture: tr.texture.refined,
        fused: tr.fused,
        view: *view,
    })
}

/// Head activations: inputs of every layer plus the raw two-vector.
fn head_forward(model: &CavgnModel, fused: &[f64]) -> (Vec<Vec<f64>>, [f64; 2]) {
    let mut inputs = Vec::with_capacity(model.head.len());
    let mut x = fused.to_vec();
    let last = model.head.len() - 1;
    for (i, layer) in model.head.iter().enumerate() {
        let z = layer.forward(&x);
        inputs.push(x);
        x = if i < last { z.iter().map(|&v| relu(v)).collect() } else { z };
    }
    (inputs, [x[0], x[1]])
}

/// Clamp an in-plane offset to the square region `[-h, h]^2`.
pub fn clamp_to_region(u: f64, v: f64, h: f64) -> (f64, f64) {
    (u.clamp(-h, h), v.clamp(-h, h))
}

/// Point on the region plane for an in-plane offset, after clamping.
pub fn place_on_region(view: &ViewSetup, u: f64, v: f64) -> Vec3 {
    let (u, v) = clamp_to_region(u, v, view.region_half_extent);
    view.lift(u, v)
}

/// Raw head output scaled by the region half-extent.
pub fn head_offset(model: &CavgnModel, fused: &[f64], h: f64) -> (f64, f64) {
    let (_, raw) = head_forward(model, fused);
    (h * raw[0], h * raw[1])
}

pub fn generate_viewpoint(model: &CavgnModel, fused: &[f64], view: &ViewSetup) -> Vec3 {
    let (u, v) = head_offset(model, fused, view.region_half_extent);
    place_on_region(view, u, v)
}

/// `1 - cos` of the angle between `v_o - c` and `v_hat - c`.
pub fn angle_loss(v_o: Vec3, v_hat: Vec3, c: Vec3) -> Result<f64> {
    let a = v_o - c;
    let b = v_hat - c;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return Err(Error::ZeroVector);
    }
    let cos = (a.dot(b) / (na * nb)).clamp(-1.0, 1.0);
    Ok(1.0 - cos)
}

/// Gradient of [`angle_loss`] with respect to `v_hat`.
fn angle_loss_grad(v_o: Vec3, v_hat: Vec3, c: Vec3) -> Vec3 {
    let a = v_o - c;
    let b = v_hat - c;
    let (na, nb) = (a.norm(), b.norm());
    let cos = a.dot(b) / (na * nb);
    -(a / (na * nb) - b * (cos / (nb * nb)))
}

fn leaky_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Backward pass of one branch from the gradient of its pooled output.
/// Returns the gradient with respect to the view embedding.
fn branch_backward(branch: &Branch, tr: &BranchTrace, d_pool: &[f64], grad: &mut Branch, embed_width: usize) -> Vec<f64> {
    let n = tr.refined.len();
    let width = d_pool.len();
    let scale = 1.0 / sqrt(width as f64);
    let dy: Vec<f64> = d_pool.iter().map(|g| g / n as f64).collect();

    // residual path
    let mut d_focused: Vec<Vec<f64>> = vec![dy.clone(); n];
    // dP[t][s] = dy . v_s, identical for every row t since dy is shared
    let dp_row: Vec<f64> = tr.v.iter().map(|vs| vs.iter().zip(&dy).map(|(a, b)| a * b).sum()).collect();
    let mut dv = vec![vec![0.0; width]; n];
    let mut dq = vec![vec![0.0; width]; n];
    let mut dk = vec![vec![0.0; width]; n];
    for t in 0..n {
        let p = &tr.weights[t];
        for s in 0..n {
            dv[s].iter_mut().zip(&dy).for_each(|(d, g)| *d += p[s] * g);
        }
        let inner: f64 = p.iter().zip(&dp_row).map(|(a, b)| a * b).sum();
        for s in 0..n {
            let ds = p[s] * (dp_row[s] - inner) * scale;
            if ds == 0.0 {
                continue;
            }
            dq[t].iter_mut().zip(&tr.k[s]).for_each(|(d, k)| *d += ds * k);
            dk[s].iter_mut().zip(&tr.q[t]).for_each(|(d, q)| *d += ds * q);
        }
    }
    let att = &branch.attention;
    for t in 0..n {
        let x = &tr.focused[t];
        for (layer, g, dout) in [
            (&att.query, &mut grad.attention.query, &dq[t]),
            (&att.key, &mut grad.attention.key, &dk[t]),
            (&att.value, &mut grad.attention.value, &dv[t]),
        ] {
            let dx = layer.backward(x, dout, g);
            d_focused[t].iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        }
    }

    // focus layers, last to first
    let mut d = d_focused;
    for l in (0..branch.focus.len()).rev() {
        let layer = &branch.focus[l];
        let mut next = Vec::with_capacity(n);
        for t in 0..n {
            let dz: Vec<f64> = d[t].iter().zip(&tr.pre[l][t]).map(|(g, &z)| g * leaky_grad(z)).collect();
            next.push(layer.backward(&tr.inputs[l][t], &dz, &mut grad.focus[l]));
        }
        d = next;
    }

    // split token gradient into expanded features and embedding
    let f = &tr.features;
    let local_w = STAGES * f.stage_width;
    let mut d_embed = vec![0.0; embed_width];
    let mut d_local: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut d_pooled = vec![0.0; local_w];
    for row in &d {
        d_local.push(row[..local_w].to_vec());
        d_pooled.iter_mut().zip(&row[local_w..2 * local_w]).for_each(|(a, b)| *a += b);
        d_embed.iter_mut().zip(&row[2 * local_w..]).for_each(|(a, b)| *a += b);
    }
    for (c, &from) in f.pooled_from.iter().enumerate() {
        d_local[from][c] += d_pooled[c];
    }

    // stage residual maps
    let w = f.stage_width;
    for t in 0..n {
        let [f1, f2, _] = &f.stages[t];
        let df3 = &d_local[t][2 * w..3 * w];
        let mut df2 = d_local[t][w..2 * w].to_vec();
        let back = branch.stages.maps[1].backward(f2, df3, &mut grad.stages.maps[1]);
        df2.iter_mut().zip(&back).for_each(|(a, b)| *a += b);
        branch.stages.maps[0].backward(f1, &df2, &mut grad.stages.maps[0]);
    }
    d_embed
}

/// Loss of one row and its parameter gradient, accumulated into `grad` with weight `scale`.
pub(crate) fn row_loss_and_grad(
    model: &CavgnModel,
    stats: &TokenStats,
    view: &ViewSetup,
    target: Vec3,
    grad: &mut CavgnModel,
    scale: f64,
) -> Result<f64> {
    let (g, t) = model.features(stats);
    let tr = trace(model, g, t, view)?;
    let (inputs, raw) = head_forward(model, &tr.fused);
    let h = view.region_half_extent;
    let (u, v) = (h * raw[0], h * raw[1]);
    let v_hat = place_on_region(view, u, v);
    let loss = angle_loss(target, v_hat, view.center)?;

    let dv_hat = angle_loss_grad(target, v_hat, view.center) * scale;
    let du = if u.abs() <= h { dv_hat.dot(view.frame_u) * h } else { 0.0 };
    let dv = if v.abs() <= h { dv_hat.dot(view.frame_v) * h } else { 0.0 };

    let mut d = vec![du, dv];
    for l in (0..model.head.len()).rev() {
        if l + 1 < model.head.len() {
            // relu after every layer but the last; its output is the next input
            d.iter_mut().zip(&inputs[l + 1]).for_each(|(g, &a)| {
                if a <= 0.0 {
                    *g = 0.0
                }
            });
        }
        d = model.head[l].backward(&inputs[l], &d, &mut grad.head[l]);
    }
    let width = model.hyper.width;
    let ew = model.hyper.embed_width;
    let mut d_embed = branch_backward(&model.geometry, &tr.geometry, &d[..width], &mut grad.geometry, ew);
    let d_tex = branch_backward(&model.texture, &tr.texture, &d[width..], &mut grad.texture, ew);
    d_embed.iter_mut().zip(&d_tex).for_each(|(a, b)| *a += b);
    let dz: Vec<f64> = d_embed
        .iter()
        .zip(&tr.embed_pre)
        .map(|(g, &z)| if z > 0.0 { *g } else { 0.0 })
        .collect();
    model.view_embedding.backward(&tr.encoding, &dz, &mut grad.view_embedding);
    Ok(loss)
}
