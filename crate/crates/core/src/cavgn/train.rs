//! Training the viewpoint generator on default-optimized records.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{angle_loss, row_loss_and_grad, token_stats, CavgnHyper, CavgnModel, TokenStats};
use crate::cloud::PointCloud;
use crate::dov::DovRecord;
use crate::error::{invalid, Error, Result};
use crate::geometry::ViewSetup;
use crate::math::{sub_seed, Vec3};
use crate::nn::{step_decay, Adam, Parameters};
use crate::ssvrn::split_indices;

/// One supervised example: the default view, its target, and the cloud statistics.
#[derive(Clone, Debug)]
pub struct TrainingRow<'a> {
    pub label: String,
    pub stats: &'a TokenStats,
    pub view: ViewSetup,
    pub target: Vec3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavgnEpoch {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Identifier used in error messages: `<cloud key>/rig<r>/face<f>`.
pub fn record_label(record: &DovRecord) -> String {
    format!("{}/rig{}/face{}", record.cloud_key(), record.rig, record.face_index)
}

fn finite(loss: f64, label: &str) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFiniteLoss(label.into()))
    }
}

/// Mean angle loss over `rows` and its gradient.
pub fn cavgn_objective(model: &CavgnModel, rows: &[&TrainingRow<'_>]) -> Result<(f64, CavgnModel)> {
    let mut grad = model.zeros_like();
    let n = rows.len().max(1) as f64;
    let mut total = 0.0;
    for row in rows {
        let loss = row_loss_and_grad(model, row.stats, &row.view, row.target, &mut grad, 1.0 / n)?;
        total += finite(loss, &row.label)?;
    }
    Ok((total / n, grad))
}

/// Objective value only.
pub fn cavgn_objective_value(model: &CavgnModel, rows: &[&TrainingRow<'_>]) -> Result<f64> {
    let n = rows.len().max(1) as f64;
    let mut total = 0.0;
    for row in rows {
        let v_hat = model.predict(row.stats, &row.view)?;
        total += finite(angle_loss(row.target, v_hat, row.view.center)?, &row.label)?;
    }
    Ok(total / n)
}

pub(super) fn rows<'a>(records: &[DovRecord], stats: &'a BTreeMap<String, TokenStats>) -> Result<Vec<TrainingRow<'a>>> {
    records
        .iter()
        .map(|r| {
            let key = r.cloud_key();
            let s = stats
                .get(&key)
                .ok_or_else(|| invalid(format!("no cloud for record {}", record_label(r))))?;
            Ok(TrainingRow {
                label: record_label(r),
                stats: s,
                view: r.view()?,
                target: r.optimized_viewpoint,
            })
        })
        .collect()
}

/// Token statistics of every cloud the records refer to.
pub fn record_stats(
    records: &[DovRecord],
    clouds: &BTreeMap<String, PointCloud>,
    tokens: usize,
) -> Result<BTreeMap<String, TokenStats>> {
    let mut out = BTreeMap::new();
    for r in records {
        let key = r.cloud_key();
        if out.contains_key(&key) {
            continue;
        }
        let cloud = clouds
            .get(&key)
            .ok_or_else(|| invalid(format!("no cloud for record {}", record_label(r))))?;
        out.insert(key, token_stats(cloud, tokens.min(cloud.len()))?);
    }
    Ok(out)
}

pub fn train_cavgn(
    records: &[DovRecord],
    clouds: &BTreeMap<String, PointCloud>,
    hp: &CavgnHyper,
) -> Result<(CavgnModel, Vec<CavgnEpoch>)> {
    let stats = record_stats(records, clouds, hp.tokens)?;
    train_cavgn_with_stats(records, &stats, hp)
}

/// Adam with step decay over the `split` fraction of records, batches of
/// `batch_size`, reporting the mean loss of both splits after each epoch.
pub fn train_cavgn_with_stats(
    records: &[DovRecord],
    stats: &BTreeMap<String, TokenStats>,
    hp: &CavgnHyper,
) -> Result<(CavgnModel, Vec<CavgnEpoch>)> {
    if records.len() < 2 {
        return Err(invalid("at least two records are required"));
    }
    if hp.batch_size == 0 || !(hp.split > 0.0 && hp.split <= 1.0) {
        return Err(invalid("batch size must be positive and split in (0, 1]"));
    }
    let all = rows(records, stats)?;
    let (mut train_idx, val_idx) = split_indices(all.len(), hp.split, hp.seed);
    let val: Vec<&TrainingRow<'_>> = val_idx.iter().map(|&i| &all[i]).collect();

    let mut model = CavgnModel::init(hp.seed, *hp);
    let mut opt = Adam::new(model.parameter_count());
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(hp.seed, "cavgn-shuffle"));
    let mut history = Vec::with_capacity(hp.epochs);
    for epoch in 0..hp.epochs {
        let lr = step_decay(hp.learning_rate, hp.decay_factor, hp.decay_every, epoch);
        train_idx.shuffle(&mut rng);
        for chunk in train_idx.chunks(hp.batch_size) {
            let batch: Vec<&TrainingRow<'_>> = chunk.iter().map(|&i| &all[i]).collect();
            let (_, grad) = cavgn_objective(&model, &batch)?;
            opt.step(&mut model, &grad, lr);
        }
        let train: Vec<&TrainingRow<'_>> = train_idx.iter().map(|&i| &all[i]).collect();
        let train_loss = cavgn_objective_value(&model, &train)?;
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(cavgn_objective_value(&model, &val)?)
        };
        history.push(CavgnEpoch {
            epoch,
            learning_rate: lr,
            train_loss,
            val_loss,
        });
    }
    Ok((model, history))
}
