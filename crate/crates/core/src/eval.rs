//! Baseline projection-based quality scorer and the viewpoint-strategy
//! evaluation harnesses.
//!
//! The baseline compares reference and degraded rasters rendered from the
//! same views. Per view it averages a luminance structural-similarity term
//! (8x8 windows, stride 4, constants `(0.01 * 255)^2` and `(0.03 * 255)^2`)
//! and a depth PSNR term (depth error normalized by the region side, peak 1,
//! capped at 60 dB, mapped to `[0, 1]`).

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{invalid, Error, Result};
use crate::features::extract_features;
use crate::geometry::{default_viewpoints, sample_candidates, ViewSetup};
use crate::math::{log10, Vec3};
use crate::metrics::{krcc, plcc, srcc};
use crate::render::{render, ProjectedImage, RenderConfig};
use crate::ssvrn::{score, ScoreModel};

pub const SSIM_WINDOW: usize = 8;
pub const SSIM_STRIDE: usize = 4;
pub const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);
pub const DEPTH_PSNR_CAP_DB: f64 = 60.0;
pub const STRUCTURAL_WEIGHT: f64 = 0.5;
pub const METRIC_NAME: &str = "ssim8x8s4+depth-psnr60";

fn luma(c: [u8; 3]) -> f64 {
    0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64
}

/// Coverage-weighted mean windowed luminance SSIM. Background is black.
pub fn structural_similarity(a: &ProjectedImage, b: &ProjectedImage) -> Option<f64> {
    let w = a.width;
    let ya: Vec<f64> = a.color.iter().map(|&c| luma(c)).collect();
    let yb: Vec<f64> = b.color.iter().map(|&c| luma(c)).collect();
    let mut acc = 0.0;
    let mut weight = 0.0;
    let mut y0 = 0;
    while y0 + SSIM_WINDOW <= a.height {
        let mut x0 = 0;
        while x0 + SSIM_WINDOW <= w {
            let mut covered = 0usize;
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for y in y0..y0 + SSIM_WINDOW {
                for x in x0..x0 + SSIM_WINDOW {
                    let k = y * w + x;
                    covered += (a.mask[k] || b.mask[k]) as usize;
                    let (p, q) = (ya[k], yb[k]);
                    sa += p;
                    sb += q;
                    saa += p * p;
                    sbb += q * q;
                    sab += p * q;
                }
            }
            if covered > 0 {
                let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
                let (ma, mb) = (sa / n, sb / n);
                let va = saa / n - ma * ma;
                let vb = sbb / n - mb * mb;
                let cov = sab / n - ma * mb;
                let ssim = ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
                acc += ssim * covered as f64;
                weight += covered as f64;
            }
            x0 += SSIM_STRIDE;
        }
        y0 += SSIM_STRIDE;
    }
    (weight > 0.0).then(|| acc / weight)
}

/// Depth agreement in `[0, 1]`; pixels covered by only one image count as
/// full-scale error.
pub fn depth_fidelity(a: &ProjectedImage, b: &ProjectedImage) -> Option<f64> {
    let side = 2.0 * a.view.region_half_extent;
    let mut n = 0usize;
    let mut sq = 0.0;
    for k in 0..a.mask.len() {
        match (a.mask[k], b.mask[k]) {
            (true, true) => {
                let e = ((a.depth[k] - b.depth[k]) / side).clamp(-1.0, 1.0);
                sq += e * e;
                n += 1;
            }
            (true, false) | (false, true) => {
                sq += 1.0;
                n += 1;
            }
            _ => {}
        }
    }
    if n == 0 {
        return None;
    }
    let mse = sq / n as f64;
    if mse == 0.0 {
        return Some(1.0);
    }
    let psnr = 10.0 * log10(1.0 / mse);
    Some((psnr / DEPTH_PSNR_CAP_DB).clamp(0.0, 1.0))
}

/// Quality of one view; `None` when either projection is empty.
pub fn view_quality(reference: &ProjectedImage, degraded: &ProjectedImage) -> Option<f64> {
    if reference.covered() == 0 || degraded.covered() == 0 {
        return None;
    }
    let s = structural_similarity(reference, degraded)?;
    let d = depth_fidelity(reference, degraded)?;
    Some(STRUCTURAL_WEIGHT * s + (1.0 - STRUCTURAL_WEIGHT) * d)
}

/// Mean per-view quality of `degraded` against `reference`; higher is better.
pub fn baseline_pcqa(
    reference: &PointCloud,
    degraded: &PointCloud,
    views: &[ViewSetup],
    cfg: &RenderConfig,
) -> Result<f64> {
    let mut total = 0.0;
    let mut used = 0usize;
    for v in views {
        let r = render(reference, v, cfg)?;
        let d = render(degraded, v, cfg)?;
        if let Some(q) = view_quality(&r, &d) {
            total += q;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::EmptyProjection);
    }
    Ok(total / used as f64)
}

#[derive(Clone, Debug)]
pub struct EvalSample {
    pub reference: PointCloud,
    pub degraded: PointCloud,
    pub mos: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewStrategy {
    Random,
    Default,
    Generated,
    Ranked,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub plcc: f64,
    pub srcc: f64,
    pub krcc: f64,
    pub strategy: ViewStrategy,
    pub metric: String,
    pub dataset: String,
    pub samples: usize,
    /// Quality rank used per face, for ranked-projection reports.
    pub rank: Option<usize>,
    pub margin: f64,
    pub resolution: usize,
    pub splat_radius: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub render: RenderConfig,
    pub margin: f64,
    pub dataset: String,
    pub seed: u64,
}

/// Produces a viewpoint on the region of `view` for a degraded cloud.
pub trait ViewpointPolicy {
    fn viewpoint(&self, cloud: &PointCloud, view: &ViewSetup) -> Result<Vec3>;
}

pub fn report(pred: &[f64], mos: &[f64], strategy: ViewStrategy, rank: Option<usize>, cfg: &EvalConfig) -> Result<EvalReport> {
    Ok(EvalReport {
        plcc: plcc(pred, mos)?,
        srcc: srcc(pred, mos)?,
        krcc: krcc(pred, mos)?,
        strategy,
        metric: String::from(METRIC_NAME),
        dataset: cfg.dataset.clone(),
        samples: pred.len(),
        rank,
        margin: cfg.margin,
        resolution: cfg.render.resolution,
        splat_radius: cfg.render.splat_radius,
    })
}

/// Views used for one sample under a strategy. Random positions are drawn
/// per sample from `seed` and the sample index.
pub fn strategy_views(
    sample_index: usize,
    degraded: &PointCloud,
    strategy: ViewStrategy,
    policy: Option<&dyn ViewpointPolicy>,
    cfg: &EvalConfig,
) -> Result<Vec<ViewSetup>> {
    let defaults = default_viewpoints(&degraded.summary(), cfg.margin)?;
    match strategy {
        ViewStrategy::Default => Ok(defaults),
        ViewStrategy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(crate::math::splitmix64(cfg.seed ^ sample_index as u64));
            defaults
                .iter()
                .map(|v| {
                    let h = v.region_half_extent;
                    let p = v.lift(rng.random_range(-h..=h), rng.random_range(-h..=h));
                    v.reoriented_at(p)
                })
                .collect()
        }
        ViewStrategy::Generated => {
            let policy = policy.ok_or_else(|| invalid("generated mode needs a viewpoint model"))?;
            defaults
                .iter()
                .map(|v| v.reoriented_at(policy.viewpoint(degraded, v)?))
                .collect()
        }
        ViewStrategy::Ranked => Err(invalid("ranked views come from rank_sweep")),
    }
}

pub fn compare_strategies(
    dataset: &[EvalSample],
    strategy: ViewStrategy,
    policy: Option<&dyn ViewpointPolicy>,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let mut pred = Vec::with_capacity(dataset.len());
    for (i, s) in dataset.iter().enumerate() {
        let views = strategy_views(i, &s.degraded, strategy, policy, cfg)?;
        pred.push(baseline_pcqa(&s.reference, &s.degraded, &views, &cfg.render)?);
    }
    let mos: Vec<f64> = dataset.iter().map(|s| s.mos).collect();
    report(&pred, &mos, strategy, None, cfg)
}

/// Per-face candidate table for one sample: SSVRN score and baseline view
/// quality of every candidate. `None` marks candidates with an empty
/// projection.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateTable {
    pub faces: Vec<Vec<(Option<f64>, Option<f64>)>>,
}

impl CandidateTable {
    /// Candidate indices of one face ordered best-first by score; ties keep
    /// the lower index first. Unscorable candidates go last.
    pub fn ranking(&self, face: usize) -> Vec<usize> {
        let row = &self.faces[face];
        let mut idx: Vec<usize> = (0..row.len()).collect();
        idx.sort_by(|&a, &b| {
            let sa = row[a].0.unwrap_or(f64::NEG_INFINITY);
            let sb = row[b].0.unwrap_or(f64::NEG_INFINITY);
            sb.partial_cmp(&sa).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        idx
    }

    /// Candidate at `rank` (1 = best) on one face. A rank inside a group of
    /// tied scores resolves to the group's first member, so a constant scorer
    /// maps every rank to the same candidate.
    pub fn candidate_at_rank(&self, face: usize, rank: usize) -> usize {
        let order = self.ranking(face);
        let row = &self.faces[face];
        let mut at = rank - 1;
        while at > 0 && row[order[at - 1]].0 == row[order[at]].0 {
            at -= 1;
        }
        order[at]
    }

    /// Mean baseline quality using, on every face, the candidate at `rank` (1 = best).
    pub fn score_at_rank(&self, rank: usize) -> Option<f64> {
        let mut total = 0.0;
        let mut used = 0;
        for f in 0..self.faces.len() {
            let j = self.candidate_at_rank(f, rank);
            if let Some(q) = self.faces[f][j].1 {
                total += q;
                used += 1;
            }
        }
        (used > 0).then(|| total / used as f64)
    }
}

pub fn candidate_table(sample: &EvalSample, model: &ScoreModel, n_v: usize, cfg: &EvalConfig) -> Result<CandidateTable> {
    let defaults = default_viewpoints(&sample.degraded.summary(), cfg.margin)?;
    let mut faces = Vec::with_capacity(defaults.len());
    for base in &defaults {
        let grid = sample_candidates(base, n_v)?;
        let mut row = Vec::with_capacity(n_v);
        for j in 0..n_v {
            let view = grid.view(j);
            let d = render(&sample.degraded, &view, &cfg.render)?;
            let r = render(&sample.reference, &view, &cfg.render)?;
            let s = match extract_features(&d) {
                Ok(f) => Some(score(model, &f)),
                Err(Error::EmptyProjection) => None,
                Err(e) => return Err(e),
            };
            row.push((s, view_quality(&r, &d)));
        }
        faces.push(row);
    }
    Ok(CandidateTable { faces })
}

/// Reports for ranks `1..=n_v` from precomputed candidate tables.
pub fn rank_sweep_from_tables(tables: &[CandidateTable], mos: &[f64], n_v: usize, cfg: &EvalConfig) -> Result<Vec<EvalReport>> {
    (1..=n_v)
        .map(|rank| {
            let pred: Vec<f64> = tables
                .iter()
                .map(|t| t.score_at_rank(rank).ok_or(Error::EmptyProjection))
                .collect::<Result<_>>()?;
            report(&pred, mos, ViewStrategy::Ranked, Some(rank), cfg)
        })
        .collect()
}

/// Baseline evaluated with the candidate at quality rank `rank` on every face.
pub fn worse_the_better(
    dataset: &[EvalSample],
    model: &ScoreModel,
    n_v: usize,
    rank: usize,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if rank == 0 || rank > n_v {
        return Err(invalid("rank outside 1..=N_v"));
    }
    let tables: Vec<CandidateTable> = dataset
        .iter()
        .map(|s| candidate_table(s, model, n_v, cfg))
        .collect::<Result<_>>()?;
    let mos: Vec<f64> = dataset.iter().map(|s| s.mos).collect();
    let pred: Vec<f64> = tables
        .iter()
        .map(|t| t.score_at_rank(rank).ok_or(Error::EmptyProjection))
        .collect::<Result<_>>()?;
    report(&pred, &mos, ViewStrategy::Ranked, Some(rank), cfg)
}

/// All `n_v` ranked reports, rendering every candidate once.
pub fn rank_sweep(dataset: &[EvalSample], model: &ScoreModel, n_v: usize, cfg: &EvalConfig) -> Result<Vec<EvalReport>> {
    let tables: Vec<CandidateTable> = dataset
        .iter()
        .map(|s| candidate_table(s, model, n_v, cfg))
        .collect::<Result<_>>()?;
    let mos: Vec<f64> = dataset.iter().map(|s| s.mos).collect();
    rank_sweep_from_tables(&tables, &mos, n_v, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::distortion::{apply_distortion, DistortionKind, DistortionSpec};
    use crate::synth::synthetic_cloud;

    fn cfg(seed: u64) -> EvalConfig {
        EvalConfig {
            render: RenderConfig {
                resolution: 32,
                splat_radius: 1,
            },
            margin: crate::geometry::DEFAULT_MARGIN,
            dataset: String::from("synthetic"),
            seed,
        }
    }

    fn ggn(cloud: &PointCloud, level: u32) -> PointCloud {
        let spec = DistortionSpec {
            kind: DistortionKind::GeometryGaussianNoise,
            level,
            levels: 5,
            seed: 11,
        };
        apply_distortion(cloud, &spec).unwrap()
    }

    fn dataset(n: usize) -> Vec<EvalSample> {
        (0..n)
            .map(|i| {
                let r = synthetic_cloud(i, 2, 800);
                let level = 1 + (i % 5) as u32;
                EvalSample {
                    degraded: ggn(&r, level),
                    reference: r,
                    mos: crate::distortion::pseudo_mos(level, 5),
                }
            })
            .collect()
    }

    #[test]
    fn identity_scores_maximum() {
        let c = synthetic_cloud(1, 5, 1000);
        let views = default_viewpoints(&c.summary(), 1.25).unwrap();
        assert_eq!(baseline_pcqa(&c, &c, &views, &cfg(0).render).unwrap(), 1.0);
    }

    #[test]
    fn ggn_levels_strictly_decrease() {
        let c = synthetic_cloud(0, 5, 1500);
        let views = default_viewpoints(&c.summary(), 1.25).unwrap();
        let scores: Vec<f64> = (1..=5)
            .map(|l| baseline_pcqa(&c, &ggn(&c, l), &views, &cfg(0).render).unwrap())
            .collect();
        for w in scores.windows(2) {
            assert!(w[1] < w[0], "{scores:?}");
        }
    }

    #[test]
    fn view_order_does_not_matter() {
        let c = synthetic_cloud(2, 5, 1000);
        let d = ggn(&c, 3);
        let mut views = default_viewpoints(&c.summary(), 1.25).unwrap();
        let a = baseline_pcqa(&c, &d, &views, &cfg(0).render).unwrap();
        views.reverse();
        views.swap(0, 3);
        let b = baseline_pcqa(&c, &d, &views, &cfg(0).render).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn default_mode_smoke_and_random_determinism() {
        let data = dataset(10);
        let d = compare_strategies(&data, ViewStrategy::Default, None, &cfg(0)).unwrap();
        assert!(d.plcc.is_finite() && d.srcc.is_finite() && d.krcc.is_finite());
        assert_eq!(d.samples, 10);
        let a = compare_strategies(&data, ViewStrategy::Random, None, &cfg(1)).unwrap();
        let b = compare_strategies(&data, ViewStrategy::Random, None, &cfg(1)).unwrap();
        assert_eq!(a, b);
        let v1 = strategy_views(0, &data[0].degraded, ViewStrategy::Random, None, &cfg(1)).unwrap();
        let v2 = strategy_views(0, &data[0].degraded, ViewStrategy::Random, None, &cfg(2)).unwrap();
        assert_ne!(v1, v2);
        assert!(compare_strategies(&data, ViewStrategy::Generated, None, &cfg(0)).is_err());
    }

    #[test]
    fn random_views_stay_on_region_planes() {
        let c = synthetic_cloud(3, 1, 500);
        let defaults = default_viewpoints(&c.summary(), 1.25).unwrap();
        let views = strategy_views(4, &c, ViewStrategy::Random, None, &cfg(9)).unwrap();
        for (v, d) in views.iter().zip(&defaults) {
            assert!(d.plane_offset(v.viewpoint).abs() < 1e-9 * d.region_half_extent);
            let (u, w) = d.plane_coords(v.viewpoint);
            assert!(u.abs() <= d.region_half_extent && w.abs() <= d.region_half_extent);
        }
    }

    fn table(scores: &[f64], quality: &[f64]) -> CandidateTable {
        let row: Vec<(Option<f64>, Option<f64>)> = scores.iter().zip(quality).map(|(&s, &q)| (Some(s), Some(q))).collect();
        CandidateTable {
            faces: vec![row.clone(), row],
        }
    }

    #[test]
    fn ranking_and_tie_resolution() {
        let t = table(&[0.2, 0.9, 0.5, 0.9], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(t.ranking(0), vec![1, 3, 2, 0]);
        assert_eq!(t.candidate_at_rank(0, 1), 1);
        assert_eq!(t.candidate_at_rank(0, 2), 1);
        assert_eq!(t.candidate_at_rank(0, 3), 2);
        assert_eq!(t.score_at_rank(4), Some(1.0));
    }

    #[test]
    fn sweep_counts_and_constant_scorer() {
        let n_v = 9;
        let tables: Vec<CandidateTable> = (0..5)
            .map(|i| {
                let q: Vec<f64> = (0..n_v).map(|j| (i * 7 + j * 3) as f64 % 11.0).collect();
                table(&[0.5; 9], &q)
            })
            .collect();
        let mos = [1.0, 2.0, 3.0, 4.0, 5.0];
        let reports = rank_sweep_from_tables(&tables, &mos, n_v, &cfg(0)).unwrap();
        assert_eq!(reports.len(), n_v);
        for (i, r) in reports.iter().enumerate() {
            assert_eq!(r.rank, Some(i + 1));
            assert_eq!((r.plcc, r.srcc, r.krcc), (reports[0].plcc, reports[0].srcc, reports[0].krcc));
        }
    }
}
