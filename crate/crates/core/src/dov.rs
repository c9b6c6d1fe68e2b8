//! Default-optimized viewpoint records: for each default view, the candidate
//! whose projection the scorer rates worst.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::distortion::{variant_id, DistortionSpec};
use crate::error::{Error, Result};
use crate::features::{extract_features, ImageFeatures};
use crate::geometry::{random_rotation, rotated_viewpoints, sample_candidates, CandidateGrid, ViewSetup, IDENTITY};
use crate::math::{sub_seed, Vec3};
use crate::render::{render, ProjectedImage, RenderConfig};
use crate::ssvrn::{score, ScoreModel};

/// Either the undistorted reference or one ladder rung.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Variant {
    Reference(ReferenceTag),
    Distorted(DistortionSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceTag {
    Reference,
}

impl Variant {
    pub const REFERENCE: Variant = Variant::Reference(ReferenceTag::Reference);
}

/// One training row for the viewpoint generator.
///
/// Besides the default and optimized viewpoints the record keeps the region
/// frame, so rotated rigs can be reconstructed without re-deriving them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DovRecord {
    pub cloud_id: String,
    pub distortion: Variant,
    pub face_index: u8,
    pub default_viewpoint: Vec3,
    pub optimized_viewpoint: Vec3,
    pub candidate_scores: Vec<Option<f64>>,
    /// 1-based rank of the optimized candidate, best first; always the last
    /// scored rank.
    pub candidate_rank_of_optimized: usize,
    pub optimized_index: usize,
    pub rig: usize,
    pub center: Vec3,
    pub frame_u: Vec3,
    pub frame_v: Vec3,
    pub region_half_extent: f64,
}

impl DovRecord {
    /// Region setup of the default viewpoint.
    pub fn view(&self) -> Result<ViewSetup> {
        let direction = (self.default_viewpoint - self.center).normalized().ok_or(Error::ZeroVector)?;
        Ok(ViewSetup {
            viewpoint: self.default_viewpoint,
            center: self.center,
            direction,
            region_half_extent: self.region_half_extent,
            frame_u: self.frame_u,
            frame_v: self.frame_v,
            face_index: self.face_index,
        })
    }

    /// Store key of the cloud this record was built from.
    pub fn cloud_key(&self) -> String {
        match &self.distortion {
            Variant::Reference(_) => self.cloud_id.clone(),
            Variant::Distorted(spec) => variant_id(&self.cloud_id, spec),
        }
    }

    pub fn optimized_score(&self) -> Option<f64> {
        self.candidate_scores[self.optimized_index]
    }
}

/// Anything that maps a projected image to a quality score.
pub trait ImageScorer {
    fn score_image(&self, img: &ProjectedImage) -> Result<f64>;
}

impl ImageScorer for ScoreModel {
    fn score_image(&self, img: &ProjectedImage) -> Result<f64> {
        Ok(score(self, &extract_features(img)?))
    }
}

/// Scores a precomputed feature vector; used when features are cached.
pub fn score_features(model: &ScoreModel, f: &ImageFeatures) -> f64 {
    score(model, f)
}

/// Index of the minimum score among scored candidates; ties keep the lower index.
pub fn argmin_score(scores: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, s) in scores.iter().enumerate() {
        if let Some(s) = *s {
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((j, s));
            }
        }
    }
    best.map(|(j, _)| j)
}

fn rank_of(scores: &[Option<f64>], j: usize) -> usize {
    let sj = scores[j].expect("rank of a scored candidate");
    // 1-based position in best-first order with ties broken by index
    1 + scores
        .iter()
        .enumerate()
        .filter(|(k, s)| match s {
            Some(s) => *s > sj || (*s == sj && *k < j),
            None => false,
        })
        .count()
}

/// Build a record from candidate scores already computed by the caller.
pub fn record_from_scores(
    cloud_id: &str,
    distortion: Variant,
    rig: usize,
    grid: &CandidateGrid,
    scores: Vec<Option<f64>>,
) -> Result<DovRecord> {
    let worst = argmin_score(&scores).ok_or(Error::EmptyProjection)?;
    let base = &grid.base;
    Ok(DovRecord {
        cloud_id: String::from(cloud_id),
        distortion,
        face_index: base.face_index,
        default_viewpoint: base.viewpoint,
        optimized_viewpoint: grid.candidates[worst].position,
        candidate_rank_of_optimized: rank_of(&scores, worst),
        optimized_index: worst,
        candidate_scores: scores,
        rig,
        center: base.center,
        frame_u: base.frame_u,
        frame_v: base.frame_v,
        region_half_extent: base.region_half_extent,
    })
}

/// Score every candidate of `grid` and keep the worst. Candidates with an
/// empty projection are excluded.
pub fn select_optimized(
    scorer: &dyn ImageScorer,
    cloud: &PointCloud,
    distortion: Variant,
    rig: usize,
    grid: &CandidateGrid,
    cfg: &RenderConfig,
) -> Result<DovRecord> {
    let mut scores = Vec::with_capacity(grid.n_v);
    for j in 0..grid.n_v {
        let img = render(cloud, &grid.view(j), cfg)?;
        scores.push(match scorer.score_image(&img) {
            Ok(s) => Some(s),
            Err(Error::EmptyProjection) => None,
            Err(e) => return Err(e),
        });
    }
    record_from_scores(cloud.id(), distortion, rig, grid, scores)
}

/// Settings shared by every record of a build.
#[derive(Clone, Debug, PartialEq)]
pub struct DovConfig {
    pub n_v: usize,
    pub margin: f64,
    pub render: RenderConfig,
    /// Extra randomly rotated cube rigs per cloud variant, on top of the canonical one.
    pub random_rigs: usize,
    pub seed: u64,
}

/// Rigs of one cloud: the canonical cube first, then `random_rigs` rotations
/// drawn from a seed tied to the cloud id.
pub fn rigs_for(cloud: &PointCloud, reference_id: &str, cfg: &DovConfig) -> Result<Vec<Vec<ViewSetup>>> {
    let summary = cloud.summary();
    let mut rigs = alloc::vec![rotated_viewpoints(&summary, cfg.margin, &IDENTITY)?];
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, reference_id));
    for _ in 0..cfg.random_rigs {
        let r = random_rotation(&mut rng);
        rigs.push(rotated_viewpoints(&summary, cfg.margin, &r)?);
    }
    Ok(rigs)
}

/// Candidate grids of every (rig, face) for one cloud, rig-major.
pub fn grids_for(cloud: &PointCloud, reference_id: &str, cfg: &DovConfig) -> Result<Vec<(usize, CandidateGrid)>> {
    let mut out = Vec::new();
    for (rig, views) in rigs_for(cloud, reference_id, cfg)?.into_iter().enumerate() {
        for v in views {
            out.push((rig, sample_candidates(&v, cfg.n_v)?));
        }
    }
    Ok(out)
}

/// One cloud variant to include in a build.
#[derive(Clone, Debug)]
pub struct DovInput<'a> {
    pub reference_id: &'a str,
    pub variant: Variant,
    pub cloud: &'a PointCloud,
}

/// Records for every (variant, rig, face), sorted by (cloud id, distortion, rig, face).
pub fn build_dov(inputs: &[DovInput<'_>], scorer: &dyn ImageScorer, cfg: &DovConfig) -> Result<Vec<DovRecord>> {
    let mut records = Vec::new();
    for input in inputs {
        for (rig, grid) in grids_for(input.cloud, input.reference_id, cfg)? {
            let mut rec = select_optimized(scorer, input.cloud, input.variant, rig, &grid, &cfg.render)?;
            rec.cloud_id = String::from(input.reference_id);
            records.push(rec);
        }
    }
    sort_records(&mut records);
    Ok(records)
}

pub fn sort_records(records: &mut [DovRecord]) {
    records.sort_by(|a, b| {
        (&a.cloud_id, &a.distortion, a.rig, a.face_index).cmp(&(&b.cloud_id, &b.distortion, b.rig, b.face_index))
    });
}
