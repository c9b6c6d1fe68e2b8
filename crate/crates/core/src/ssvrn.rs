//! Self-supervised viewpoint ranking: a shared-weight image scorer trained
//! on pairs of projections whose quality order is known from the
//! distortion level that produced them.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distortion::{DistortionKind, DistortionLadder};
use crate::error::{invalid, Error, Result};
use crate::features::{extract_features, ImageFeatures, FEATURE_DIM};
use crate::geometry::{CandidateGrid, ViewSetup};
use crate::math::{ln, sigmoid, sqrt};
use crate::nn::{relu, step_decay, Adam, Dense, Parameters};
use crate::render::{render, RenderConfig};

/// Clamp applied to probabilities inside the cross-entropy.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsvrnHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub batch_size: usize,
    pub split: f64,
    pub seed: u64,
}

impl Default for SsvrnHyper {
    fn default() -> Self {
        SsvrnHyper {
            learning_rate: 1e-4,
            epochs: 100,
            decay_factor: 0.9,
            decay_every: 10,
            batch_size: 32,
            split: 0.8,
            seed: 0,
        }
    }
}

/// Scorer `D -> 32 -> 16 -> 1` with rectifiers and a final sigmoid, applied
/// to standardized features. Both members of a pair go through the same
/// weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub layers: Vec<Dense>,
    pub seed: u64,
    pub hyper: SsvrnHyper,
}

pub const HIDDEN: [usize; 2] = [32, 16];

impl ScoreModel {
    pub fn init(seed: u64, hyper: SsvrnHyper) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [FEATURE_DIM, HIDDEN[0], HIDDEN[1], 1];
        let layers = dims
            .windows(2)
            .map(|w| Dense::init(w[0], w[1], 1.0, &mut rng))
            .collect();
        ScoreModel {
            input_mean: vec![0.0; FEATURE_DIM],
            input_scale: vec![1.0; FEATURE_DIM],
            layers,
            seed,
            hyper,
        }
    }

    /// All weights zero: scores 0.5 everywhere.
    pub fn zeros() -> Self {
        let mut m = ScoreModel::init(0, SsvrnHyper::default());
        m.zero();
        m
    }

    /// Fit the input standardization to a set of feature vectors.
    pub fn fit_normalization<'a>(&mut self, feats: impl Iterator<Item = &'a ImageFeatures>) {
        let mut n = 0.0;
        let mut sum = vec![0.0; FEATURE_DIM];
        let mut sq = vec![0.0; FEATURE_DIM];
        for f in feats {
            n += 1.0;
            for (i, &x) in f.0.iter().enumerate() {
                sum[i] += x;
                sq[i] += x * x;
            }
        }
        if n == 0.0 {
            return;
        }
        for i in 0..FEATURE_DIM {
            let m = sum[i] / n;
            let sd = sqrt((sq[i] / n - m * m).max(0.0));
            self.input_mean[i] = m;
            self.input_scale[i] = if sd > 1e-12 { 1.0 / sd } else { 1.0 };
        }
    }

    fn normalize(&self, feats: &ImageFeatures) -> Vec<f64> {
        feats
            .0
            .iter()
            .zip(self.input_mean.iter().zip(&self.input_scale))
            .map(|(x, (m, s))| (x - m) * s)
            .collect()
    }

    fn forward(&self, feats: &ImageFeatures) -> ScoreTrace {
        let x0 = self.normalize(feats);
        let z1 = self.layers[0].forward(&x0);
        let a1: Vec<f64> = z1.iter().map(|&z| relu(z)).collect();
        let z2 = self.layers[1].forward(&a1);
        let a2: Vec<f64> = z2.iter().map(|&z| relu(z)).collect();
        let z3 = self.layers[2].forward(&a2)[0];
        ScoreTrace {
            x0,
            z1,
            a1,
            z2,
            a2,
            score: sigmoid(z3),
        }
    }

    fn backward(&self, t: &ScoreTrace, d_score: f64, grad: &mut ScoreModel) {
        let dz3 = d_score * t.score * (1.0 - t.score);
        let da2 = self.layers[2].backward(&t.a2, &[dz3], &mut grad.layers[2]);
        let dz2: Vec<f64> = da2.iter().zip(&t.z2).map(|(g, &z)| if z > 0.0 { *g } else { 0.0 }).collect();
        let da1 = self.layers[1].backward(&t.a1, &dz2, &mut grad.layers[1]);
        let dz1: Vec<f64> = da1.iter().zip(&t.z1).map(|(g, &z)| if z > 0.0 { *g } else { 0.0 }).collect();
        self.layers[0].backward(&t.x0, &dz1, &mut grad.layers[0]);
    }

    fn zeros_like(&self) -> ScoreModel {
        let mut g = self.clone();
        g.zero();
        g
    }
}

impl Parameters for ScoreModel {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.layers.iter().for_each(|l| l.visit(f));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.layers.iter_mut().for_each(|l| l.visit_mut(f));
    }
}

struct ScoreTrace {
    x0: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    score: f64,
}

/// Predicted quality in `(0, 1)`; higher is better.
pub fn score(model: &ScoreModel, feats: &ImageFeatures) -> f64 {
    model.forward(feats).score
}

/// Probability that the image scored `s_a` is better than the one scored `s_b`.
pub fn rank_probability(s_a: f64, s_b: f64) -> f64 {
    sigmoid(s_a - s_b)
}

/// Binary cross-entropy of a predicted order probability against its label.
pub fn pair_loss(p_ab: f64, label: f64) -> f64 {
    let p = p_ab.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -label * ln(p) - (1.0 - label) * ln(1.0 - p)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairProvenance {
    pub cloud_id: String,
    pub kind: DistortionKind,
    pub level_a: u32,
    pub level_b: u32,
    pub face: u8,
    pub candidate_index: usize,
}

/// Two projections of one cloud from one viewpoint at two distortion levels.
/// `label` is 1 when `a` has the lower level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankPair {
    pub provenance: PairProvenance,
    pub label: f64,
    pub features_a: ImageFeatures,
    pub features_b: ImageFeatures,
}

fn choose2(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// `clouds * viewpoints * kinds * C(levels + 1, 2)`.
pub fn pair_count(clouds: u64, viewpoints: u64, kinds: u64, levels: u64) -> u64 {
    clouds * viewpoints * kinds * choose2(levels + 1)
}

/// Which ladder rung and which view each pair member comes from.
/// Rung 0 is the reference, rung `1 + i` is `ladder.variants[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannedPair {
    pub rung_a: usize,
    pub rung_b: usize,
    pub view: usize,
    pub label: f64,
    pub provenance: PairProvenance,
}

fn rung_index(ladder: &DistortionLadder, kind: DistortionKind, level: u32) -> usize {
    if level == 0 {
        return 0;
    }
    1 + ladder
        .variants
        .iter()
        .position(|(s, _)| s.kind == kind && s.level == level)
        .expect("ladder holds every rung")
}

/// Flattened candidate views, face-major.
pub fn grid_views(grids: &[CandidateGrid]) -> Vec<(u8, usize, ViewSetup)> {
    grids
        .iter()
        .flat_map(|g| (0..g.n_v).map(move |j| (g.base.face_index, j, g.view(j))))
        .collect()
}

/// Enumerate every (viewpoint, kind, unordered level pair) with a seeded
/// random orientation.
pub fn plan_pairs(ladder: &DistortionLadder, grids: &[CandidateGrid], seed: u64) -> Vec<PlannedPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut view = 0;
    for g in grids {
        for j in 0..g.n_v {
            for &kind in &ladder.kinds {
                for lo in 0..=ladder.levels {
                    for hi in lo + 1..=ladder.levels {
                        let swap: bool = rng.random();
                        let (la, lb) = if swap { (hi, lo) } else { (lo, hi) };
                        out.push(PlannedPair {
                            rung_a: rung_index(ladder, kind, la),
                            rung_b: rung_index(ladder, kind, lb),
                            view,
                            label: if la < lb { 1.0 } else { 0.0 },
                            provenance: PairProvenance {
                                cloud_id: String::from(ladder.reference.id()),
                                kind,
                                level_a: la,
                                level_b: lb,
                                face: g.base.face_index,
                                candidate_index: j,
                            },
                        });
                    }
                }
            }
            view += 1;
        }
    }
    out
}

/// Features of every ladder rung under every view: `table[rung][view]`.
/// `None` marks an empty projection.
pub type FeatureTable = Vec<Vec<Option<ImageFeatures>>>;

pub fn feature_table(ladder: &DistortionLadder, views: &[ViewSetup], cfg: &RenderConfig) -> Result<FeatureTable> {
    let rungs = core::iter::once(&ladder.reference).chain(ladder.variants.iter().map(|(_, c)| c));
    rungs
        .map(|cloud| {
            views
                .iter()
                .map(|v| {
                    let img = render(cloud, v, cfg)?;
                    match extract_features(&img) {
                        Ok(f) => Ok(Some(f)),
                        Err(Error::EmptyProjection) => Ok(None),
                        Err(e) => Err(e),
                    }
                })
                .collect()
        })
        .collect()
}

/// Attach cached features to planned pairs. Pairs touching an empty
/// projection are dropped.
pub fn assemble_pairs(plan: Vec<PlannedPair>, table: &FeatureTable) -> Vec<RankPair> {
    plan.into_iter()
        .filter_map(|p| {
            let a = table[p.rung_a][p.view].as_ref()?;
            let b = table[p.rung_b][p.view].as_ref()?;
            Some(RankPair {
                provenance: p.provenance,
                label: p.label,
                features_a: a.clone(),
                features_b: b.clone(),
            })
        })
        .collect()
}

pub fn generate_pairs(
    ladder: &DistortionLadder,
    grids: &[CandidateGrid],
    cfg: &RenderConfig,
    seed: u64,
) -> Result<Vec<RankPair>> {
    let views: Vec<ViewSetup> = grid_views(grids).into_iter().map(|(_, _, v)| v).collect();
    let table = feature_table(ladder, &views, cfg)?;
    Ok(assemble_pairs(plan_pairs(ladder, grids, seed), &table))
}

/// Mean pair loss over `pairs` and its gradient with respect to every weight.
pub fn pair_objective(model: &ScoreModel, pairs: &[&RankPair]) -> (f64, ScoreModel) {
    let mut grad = model.zeros_like();
    let mut total = 0.0;
    let n = pairs.len().max(1) as f64;
    for pair in pairs {
        let ta = model.forward(&pair.features_a);
        let tb = model.forward(&pair.features_b);
        let p = rank_probability(ta.score, tb.score);
        total += pair_loss(p, pair.label);
        // d loss / d (s_a - s_b); the clamp never binds since |s_a - s_b| < 1
        let d = (p - pair.label) / n;
        model.backward(&ta, d, &mut grad);
        model.backward(&tb, -d, &mut grad);
    }
    (total / n, grad)
}

/// Objective value only, for finite-difference checks.
pub fn pair_objective_value(model: &ScoreModel, pairs: &[&RankPair]) -> f64 {
    let n = pairs.len().max(1) as f64;
    pairs
        .iter()
        .map(|p| {
            let prob = rank_probability(score(model, &p.features_a), score(model, &p.features_b));
            pair_loss(prob, p.label)
        })
        .sum::<f64>()
        / n
}

fn is_correct(s_a: f64, s_b: f64, label: f64) -> bool {
    if label >= 0.5 {
        s_a > s_b
    } else {
        s_b > s_a
    }
}

/// Fraction of pairs ordered correctly; ties count as wrong.
pub fn ranking_accuracy(model: &ScoreModel, pairs: &[RankPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(invalid("no pairs to rank"));
    }
    let correct = pairs
        .iter()
        .filter(|p| is_correct(score(model, &p.features_a), score(model, &p.features_b), p.label))
        .count();
    Ok(correct as f64 / pairs.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// Deterministic train/validation split of `n` items.
pub fn split_indices(n: usize, split: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64 * split) as usize).clamp(1, n.saturating_sub(1).max(1));
    let val = idx.split_off(n_train);
    (idx, val)
}

fn evaluate(model: &ScoreModel, pairs: &[&RankPair]) -> (f64, f64) {
    if pairs.is_empty() {
        return (0.0, 0.0);
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for p in pairs {
        let (sa, sb) = (score(model, &p.features_a), score(model, &p.features_b));
        loss += pair_loss(rank_probability(sa, sb), p.label);
        correct += is_correct(sa, sb, p.label) as usize;
    }
    let n = pairs.len() as f64;
    (loss / n, correct as f64 / n)
}

/// Train on the `split` fraction of `pairs`, report on the rest.
pub fn train_ssvrn(pairs: &[RankPair], hp: &SsvrnHyper) -> Result<(ScoreModel, Vec<EpochStats>)> {
    if pairs.len() < 2 {
        return Err(invalid("need at least 2 pairs"));
    }
    if !(hp.split > 0.0 && hp.split < 1.0) {
        return Err(invalid(format!("split {} outside (0, 1)", hp.split)));
    }
    let (train_idx, val_idx) = split_indices(pairs.len(), hp.split, hp.seed);
    let train: Vec<&RankPair> = train_idx.iter().map(|&i| &pairs[i]).collect();
    let val: Vec<&RankPair> = val_idx.iter().map(|&i| &pairs[i]).collect();

    let mut model = ScoreModel::init(hp.seed, hp.clone());
    model.fit_normalization(train.iter().flat_map(|p| [&p.features_a, &p.features_b]));
    let mut opt = Adam::new(model.parameter_count());
    let mut rng = ChaCha8Rng::seed_from_u64(crate::math::sub_seed(hp.seed, "ssvrn-shuffle"));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let batch = hp.batch_size.max(1);
    let mut history = Vec::with_capacity(hp.epochs);

    for epoch in 0..hp.epochs {
        let lr = step_decay(hp.learning_rate, hp.decay_factor, hp.decay_every, epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let members: Vec<&RankPair> = chunk.iter().map(|&i| train[i]).collect();
            let (loss, grad) = pair_objective(&model, &members);
            if !loss.is_finite() {
                let p = &members[0].provenance;
                return Err(Error::NonFiniteLoss(format!(
                    "epoch {epoch}, batch starting at {}/{:?}/face {}",
                    p.cloud_id, p.kind, p.face
                )));
            }
            epoch_loss += loss * members.len() as f64;
            opt.step(&mut model, &grad, lr);
        }
        let (_, train_accuracy) = evaluate(&model, &train);
        let (val_loss, val_accuracy) = evaluate(&model, &val);
        history.push(EpochStats {
            epoch,
            learning_rate: lr,
            train_loss: epoch_loss / train.len() as f64,
            train_accuracy,
            val_loss,
            val_accuracy,
        });
    }
    Ok((model, history))
}

/// Scores of a list of feature vectors, `None` entries kept as `None`.
pub fn score_all(model: &ScoreModel, feats: &[Option<ImageFeatures>]) -> Vec<Option<f64>> {
    feats.iter().map(|f| f.as_ref().map(|f| score(model, f))).collect()
}
