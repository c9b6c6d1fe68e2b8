//! Correlation metrics and the worst-viewpoint consistency index.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{invalid, Error, Result};
use crate::math::sqrt;

fn check(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(invalid("series lengths differ"));
    }
    if pred.len() < 3 {
        return Err(invalid("need at least 3 samples"));
    }
    if pred.iter().chain(target).any(|v| !v.is_finite()) {
        return Err(invalid("non-finite value in series"));
    }
    Ok(())
}

/// Pearson linear correlation on raw values.
pub fn plcc(pred: &[f64], target: &[f64]) -> Result<f64> {
    check(pred, target)?;
    pearson(pred, target)
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateSeries);
    }
    Ok((sxy / sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// 1-based ranks, ties share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share rank mean(i+1 ..= j+1)
        let r = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation: Pearson on average ranks.
pub fn srcc(pred: &[f64], target: &[f64]) -> Result<f64> {
    check(pred, target)?;
    pearson(&average_ranks(pred), &average_ranks(target))
}

/// Kendall tau-b with tie correction.
pub fn krcc(pred: &[f64], target: &[f64]) -> Result<f64> {
    check(pred, target)?;
    let n = pred.len();
    let (mut s, mut tx, mut ty) = (0i64, 0i64, 0i64);
    let n0 = (n * (n - 1) / 2) as i64;
    for i in 0..n {
        for j in i + 1..n {
            let a = sign(pred[i] - pred[j]);
            let b = sign(target[i] - target[j]);
            s += a * b;
            tx += (a == 0) as i64;
            ty += (b == 0) as i64;
        }
    }
    let (dx, dy) = (n0 - tx, n0 - ty);
    if dx == 0 || dy == 0 {
        return Err(Error::DegenerateSeries);
    }
    Ok(s as f64 / sqrt((dx * dy) as f64))
}

fn sign(v: f64) -> i64 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Fraction of groups where the human-chosen worst candidate equals the
/// scorer's worst candidate.
pub fn consistency_index(human: &[usize], worst: &[usize]) -> Result<f64> {
    if human.len() != worst.len() {
        return Err(invalid("selection lists differ in length"));
    }
    if human.is_empty() {
        return Err(invalid("no groups"));
    }
    let matches = human.iter().zip(worst).filter(|(a, b)| a == b).count();
    Ok(matches as f64 / human.len() as f64)
}

/// Most frequent value; ties go to the lowest value.
pub fn modal_choice(choices: &[usize]) -> Option<usize> {
    let mut sorted = choices.to_vec();
    sorted.sort_unstable();
    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        if best.is_none_or(|(_, c)| j - i > c) {
            best = Some((sorted[i], j - i));
        }
        i = j;
    }
    best.map(|(v, _)| v)
}
