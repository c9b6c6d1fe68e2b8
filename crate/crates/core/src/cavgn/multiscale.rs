//! Token sampling and fixed per-scale neighbourhood statistics.
//!
//! Three stages use radii `0.02 * diag`, `0.04 * diag`, `0.08 * diag`.
//! Geometry statistics per token: log neighbour share, centroid offset
//! relative to the radius, and the three covariance eigenvalue ratios.
//! Texture statistics: mean and std of each color channel in `[0, 1]`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{invalid, Result};
use crate::math::{cos, ln, sqrt, Vec3};
use crate::nn::Dense;

pub const STAGES: usize = 3;
pub const GEOMETRY_STATS: usize = 5;
pub const TEXTURE_STATS: usize = 6;
pub const BASE_RADIUS_FRACTION: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Geometry,
    Texture,
}

impl Channel {
    pub fn width(self) -> usize {
        match self {
            Channel::Geometry => GEOMETRY_STATS,
            Channel::Texture => TEXTURE_STATS,
        }
    }
}

pub fn stage_radius(stage: usize, diagonal: f64) -> f64 {
    BASE_RADIUS_FRACTION * (1u32 << stage) as f64 * diagonal
}

/// Farthest-point sampling seeded at index 0; ties keep the lower index.
pub fn farthest_point_sample(points: &[Vec3], k: usize) -> Result<Vec<usize>> {
    if k > points.len() {
        return Err(invalid("more tokens than points"));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut chosen = Vec::with_capacity(k);
    let mut dist = vec![f64::INFINITY; points.len()];
    let mut current = 0;
    for _ in 0..k {
        chosen.push(current);
        let c = points[current];
        let mut next = 0;
        let mut far = -1.0;
        for (i, p) in points.iter().enumerate() {
            let d = (*p - c).dot(*p - c);
            if d < dist[i] {
                dist[i] = d;
            }
            if dist[i] > far {
                far = dist[i];
                next = i;
            }
        }
        current = next;
    }
    Ok(chosen)
}

/// Eigenvalues of a symmetric 3x3 matrix, descending.
pub fn symmetric_eigenvalues(m: [[f64; 3]; 3]) -> [f64; 3] {
    let p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    if p1 == 0.0 {
        let mut e = [m[0][0], m[1][1], m[2][2]];
        e.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
        return e;
    }
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = sqrt(p2 / 6.0);
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = (m[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (det / 2.0).clamp(-1.0, 1.0);
    let phi = libm::acos(r) / 3.0;
    let e1 = q + 2.0 * p * cos(phi);
    let e3 = q + 2.0 * p * cos(phi + 2.0 * core::f64::consts::PI / 3.0);
    let e2 = 3.0 * q - e1 - e3;
    [e1, e2, e3]
}

fn geometry_stats(points: &[Vec3], center: Vec3, neighbours: &[usize], radius: f64, total: usize) -> Vec<f64> {
    let n = neighbours.len();
    if n == 0 {
        return vec![0.0; GEOMETRY_STATS];
    }
    let mean = neighbours.iter().fold(Vec3::ZERO, |acc, &i| acc + points[i]) / n as f64;
    let mut cov = [[0.0; 3]; 3];
    for &i in neighbours {
        let d = (points[i] - mean).to_array();
        for a in 0..3 {
            for b in 0..3 {
                cov[a][b] += d[a] * d[b] / n as f64;
            }
        }
    }
    let eig = symmetric_eigenvalues(cov);
    let sum: f64 = eig.iter().map(|e| e.max(0.0)).sum();
    let ratios: [f64; 3] = if sum > 0.0 {
        [eig[0].max(0.0) / sum, eig[1].max(0.0) / sum, eig[2].max(0.0) / sum]
    } else {
        [0.0; 3]
    };
    vec![
        ln(1.0 + n as f64) / ln(1.0 + total as f64),
        (mean - center).norm() / radius,
        ratios[0],
        ratios[1],
        ratios[2],
    ]
}

fn texture_stats(colors: &[[u8; 3]], neighbours: &[usize]) -> Vec<f64> {
    if neighbours.is_empty() {
        return vec![0.0; TEXTURE_STATS];
    }
    let mut out = vec![0.0; TEXTURE_STATS];
    for ch in 0..3 {
        let (m, s) = crate::math::mean_std(neighbours.iter().map(|&i| colors[i][ch] as f64 / 255.0));
        out[ch] = m;
        out[3 + ch] = s;
    }
    out
}

/// Fixed statistics of one cloud: `stats[stage][token]` for each channel.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenStats {
    pub tokens: Vec<usize>,
    pub geometry: [Vec<Vec<f64>>; STAGES],
    pub texture: [Vec<Vec<f64>>; STAGES],
}

impl TokenStats {
    pub fn channel(&self, channel: Channel) -> &[Vec<Vec<f64>>; STAGES] {
        match channel {
            Channel::Geometry => &self.geometry,
            Channel::Texture => &self.texture,
        }
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }
}

pub fn token_stats(cloud: &PointCloud, k: usize) -> Result<TokenStats> {
    let tokens = farthest_point_sample(cloud.points(), k)?;
    let diag = cloud.summary().diagonal;
    let pts = cloud.points();
    let mut geometry: [Vec<Vec<f64>>; STAGES] = Default::default();
    let mut texture: [Vec<Vec<f64>>; STAGES] = Default::default();
    for stage in 0..STAGES {
        let radius = stage_radius(stage, diag);
        let r2 = radius * radius;
        for &t in &tokens {
            let c = pts[t];
            let neighbours: Vec<usize> = if radius > 0.0 {
                (0..pts.len()).filter(|&i| (pts[i] - c).dot(pts[i] - c) <= r2).collect()
            } else {
                Vec::new()
            };
            let r = if radius > 0.0 { radius } else { 1.0 };
            geometry[stage].push(geometry_stats(pts, c, &neighbours, r, pts.len()));
            texture[stage].push(texture_stats(cloud.colors(), &neighbours));
        }
    }
    Ok(TokenStats {
        tokens,
        geometry,
        texture,
    })
}

/// Learnable residual maps between stages: `f_k = stats_k + W_k f_{k-1} + b_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageMaps {
    pub maps: Vec<Dense>,
}

impl StageMaps {
    pub fn zeros(width: usize) -> Self {
        StageMaps {
            maps: (1..STAGES).map(|_| Dense::zeros(width, width)).collect(),
        }
    }
}

/// Local features `f_c`, pooled `f_p`, and expanded `F = [f_c, repeat(f_p)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiScaleFeatures {
    /// Per token, the per-stage features before concatenation.
    pub stages: Vec<[Vec<f64>; STAGES]>,
    pub local: Vec<Vec<f64>>,
    pub pooled: Vec<f64>,
    /// Token index that supplied each pooled entry.
    pub pooled_from: Vec<usize>,
    pub expanded: Vec<Vec<f64>>,
    pub stage_width: usize,
}

impl MultiScaleFeatures {
    pub fn token_count(&self) -> usize {
        self.local.len()
    }

    pub fn width(&self) -> usize {
        2 * STAGES * self.stage_width
    }
}

/// Apply the stage maps to fixed statistics and expand.
pub fn assemble(stats: &[Vec<Vec<f64>>; STAGES], maps: &StageMaps) -> MultiScaleFeatures {
    let k = stats[0].len();
    let width = stats[0].first().map_or(0, |v| v.len());
    let mut stages = Vec::with_capacity(k);
    for t in 0..k {
        let f1 = stats[0][t].clone();
        let mut f2 = maps.maps[0].forward(&f1);
        f2.iter_mut().zip(&stats[1][t]).for_each(|(a, s)| *a += s);
        let mut f3 = maps.maps[1].forward(&f2);
        f3.iter_mut().zip(&stats[2][t]).for_each(|(a, s)| *a += s);
        stages.push([f1, f2, f3]);
    }
    let local: Vec<Vec<f64>> = stages.iter().map(|s| s.concat()).collect();
    let cw = STAGES * width;
    let mut pooled = vec![f64::NEG_INFINITY; cw];
    let mut pooled_from = vec![0; cw];
    for (t, row) in local.iter().enumerate() {
        for c in 0..cw {
            if row[c] > pooled[c] {
                pooled[c] = row[c];
                pooled_from[c] = t;
            }
        }
    }
    let expanded = local
        .iter()
        .map(|row| {
            let mut e = row.clone();
            e.extend_from_slice(&pooled);
            e
        })
        .collect();
    MultiScaleFeatures {
        stages,
        local,
        pooled,
        pooled_from,
        expanded,
        stage_width: width,
    }
}

/// Multi-scale features of one channel with identity-free (zero) stage maps.
pub fn extract_multiscale(cloud: &PointCloud, channel: Channel, k: usize) -> Result<MultiScaleFeatures> {
    let stats = token_stats(cloud, k)?;
    Ok(assemble(stats.channel(channel), &StageMaps::zeros(channel.width())))
}
