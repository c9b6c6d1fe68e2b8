//! Pipeline stages shared by the command line and the tests. Work is fanned
//! out per cloud with rayon and collected in input order, so outputs do not
//! depend on the thread count.

use std::collections::BTreeMap;

use anyhow::Context;
use pcqa_view_core::cavgn::CavgnModel;
use pcqa_view_core::distortion::{build_ladder, pseudo_mos, DistortionLadder};
use pcqa_view_core::dov::{build_dov, sort_records, DovConfig, DovInput, DovRecord, Variant};
use pcqa_view_core::eval::{
    baseline_pcqa, candidate_table, rank_sweep_from_tables, report, strategy_views, EvalConfig, EvalReport, EvalSample,
    ViewStrategy, ViewpointPolicy,
};
use pcqa_view_core::geometry::{default_viewpoints, sample_candidates, CandidateGrid};
use pcqa_view_core::math::sub_seed;
use pcqa_view_core::ssvrn::{generate_pairs, pair_count, RankPair, ScoreModel};
use pcqa_view_core::PointCloud;
use rayon::prelude::*;

use crate::config::{RunConfig, Stage};
use crate::store::ladder_seed;

/// Run `f` on a pool of `cfg.threads` workers (0 picks the rayon default).
pub fn with_pool<T: Send>(cfg: &RunConfig, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build()?;
    Ok(pool.install(f))
}

pub fn distort_all(clouds: &[PointCloud], cfg: &RunConfig) -> anyhow::Result<Vec<DistortionLadder>> {
    clouds
        .par_iter()
        .map(|c| {
            build_ladder(c, &cfg.kinds, cfg.levels, ladder_seed(cfg, c.id()))
                .with_context(|| format!("distorting {}", c.id()))
        })
        .collect()
}

/// Candidate grids on the six default faces of a reference cloud.
pub fn candidate_grids(reference: &PointCloud, cfg: &RunConfig) -> anyhow::Result<Vec<CandidateGrid>> {
    default_viewpoints(&reference.summary(), cfg.margin)?
        .iter()
        .map(|v| Ok(sample_candidates(v, cfg.grid)?))
        .collect()
}

/// Pair total before empty projections are dropped.
pub fn expected_pairs(ladders: usize, cfg: &RunConfig) -> u64 {
    pair_count(ladders as u64, cfg.viewpoints() as u64, cfg.kinds.len() as u64, cfg.levels as u64)
}

pub fn generate_all_pairs(ladders: &[DistortionLadder], cfg: &RunConfig) -> anyhow::Result<Vec<RankPair>> {
    let seed = cfg.stage_seed(Stage::Pairs);
    let per: Vec<Vec<RankPair>> = ladders
        .par_iter()
        .map(|l| {
            let grids = candidate_grids(&l.reference, cfg)?;
            generate_pairs(l, &grids, &cfg.render, sub_seed(seed, l.reference.id()))
                .with_context(|| format!("pairs for {}", l.reference.id()))
        })
        .collect::<anyhow::Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

pub fn dov_config(cfg: &RunConfig) -> DovConfig {
    DovConfig {
        n_v: cfg.grid,
        margin: cfg.margin,
        render: cfg.render,
        random_rigs: cfg.random_rigs,
        seed: cfg.stage_seed(Stage::Dov),
    }
}

/// Records for the reference and every variant of every ladder.
pub fn build_dov_all(ladders: &[DistortionLadder], model: &ScoreModel, cfg: &RunConfig) -> anyhow::Result<Vec<DovRecord>> {
    let dcfg = dov_config(cfg);
    let mut inputs = Vec::new();
    for l in ladders {
        let id = l.reference.id();
        inputs.push(DovInput {
            reference_id: id,
            variant: Variant::REFERENCE,
            cloud: &l.reference,
        });
        for (spec, c) in &l.variants {
            inputs.push(DovInput {
                reference_id: id,
                variant: Variant::Distorted(*spec),
                cloud: c,
            });
        }
    }
    let per: Vec<Vec<DovRecord>> = inputs
        .par_iter()
        .map(|i| build_dov(std::slice::from_ref(i), model, &dcfg).map_err(anyhow::Error::from))
        .collect::<anyhow::Result<_>>()?;
    let mut records: Vec<DovRecord> = per.into_iter().flatten().collect();
    sort_records(&mut records);
    Ok(records)
}

/// Every distorted variant against its reference. Scores come from `mos`
/// when it has the variant id, otherwise from the pseudo-MOS of the level.
pub fn eval_dataset(ladders: &[DistortionLadder], mos: Option<&BTreeMap<String, f64>>) -> anyhow::Result<Vec<EvalSample>> {
    let mut out = Vec::new();
    for l in ladders {
        for (spec, c) in &l.variants {
            let score = match mos {
                Some(m) => *m
                    .get(c.id())
                    .with_context(|| format!("no MOS for {}", c.id()))?,
                None => pseudo_mos(spec.level, spec.levels),
            };
            out.push(EvalSample {
                reference: l.reference.clone(),
                degraded: c.clone(),
                mos: score,
            });
        }
    }
    Ok(out)
}

pub fn eval_config(cfg: &RunConfig) -> EvalConfig {
    EvalConfig {
        render: cfg.render,
        margin: cfg.margin,
        dataset: cfg.dataset.clone(),
        seed: cfg.stage_seed(Stage::Eval),
    }
}

/// Default, random or generated views; one report.
pub fn evaluate_strategy(
    data: &[EvalSample],
    strategy: ViewStrategy,
    policy: Option<&(dyn ViewpointPolicy + Sync)>,
    cfg: &RunConfig,
) -> anyhow::Result<EvalReport> {
    let ecfg = eval_config(cfg);
    let pred: Vec<f64> = data
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let p = policy.map(|p| p as &dyn ViewpointPolicy);
            let views = strategy_views(i, &s.degraded, strategy, p, &ecfg)?;
            Ok(baseline_pcqa(&s.reference, &s.degraded, &views, &ecfg.render)?)
        })
        .collect::<anyhow::Result<_>>()?;
    let mos: Vec<f64> = data.iter().map(|s| s.mos).collect();
    Ok(report(&pred, &mos, strategy, None, &ecfg)?)
}

/// One report per quality rank `1..=grid`.
pub fn evaluate_rank_sweep(data: &[EvalSample], model: &ScoreModel, cfg: &RunConfig) -> anyhow::Result<Vec<EvalReport>> {
    let ecfg = eval_config(cfg);
    let tables = data
        .par_iter()
        .map(|s| candidate_table(s, model, cfg.grid, &ecfg))
        .collect::<Result<Vec<_>, _>>()?;
    let mos: Vec<f64> = data.iter().map(|s| s.mos).collect();
    Ok(rank_sweep_from_tables(&tables, &mos, cfg.grid, &ecfg)?)
}

/// Generated-view evaluation with a trained viewpoint model.
pub fn evaluate_generated(data: &[EvalSample], model: &CavgnModel, cfg: &RunConfig) -> anyhow::Result<EvalReport> {
    evaluate_strategy(data, ViewStrategy::Generated, Some(model), cfg)
}
