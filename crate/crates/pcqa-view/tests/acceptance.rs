//! Acceptance criteria 1 to 9. Runs as a plain binary so every criterion
//! prints one PASS or FAIL line; the process exits nonzero if any fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use pcqa_view::config::RunConfig;
use pcqa_view::pipeline::{build_dov_all, distort_all, eval_dataset, evaluate_rank_sweep, generate_all_pairs};
use pcqa_view_core::cavgn::{
    generate_viewpoint, record_stats, train_cavgn_with_stats, CavgnHyper, CavgnModel, TrainingRow,
};
use pcqa_view_core::cavgn::{cavgn_objective, cavgn_objective_value, record_label};
use pcqa_view_core::distortion::{DistortionKind, DistortionLadder};
use pcqa_view_core::dov::{rigs_for, DovConfig, DovRecord, Variant};
use pcqa_view_core::features::{ImageFeatures, FEATURE_DIM};
use pcqa_view_core::geometry::{random_rotation, rotated_viewpoints, ViewSetup};
use pcqa_view_core::metrics::{krcc, plcc, srcc};
use pcqa_view_core::nn::{Dense, Parameters};
use pcqa_view_core::render::{pixel_of, render, RenderConfig, NO_POINT};
use pcqa_view_core::ssvrn::{
    pair_count, pair_objective, pair_objective_value, ranking_accuracy, split_indices, train_ssvrn, PairProvenance,
    RankPair, ScoreModel, SsvrnHyper,
};
use pcqa_view_core::synth::synthetic_cloud;
use pcqa_view_core::{PointCloud, Vec3};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, detail: String) -> Check {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- shared data

/// Desk-scale configuration shared by criteria 5, 6, 7 and 9.
fn desk_config() -> RunConfig {
    let mut cfg = RunConfig::parse(
        "resolution = 64\nsplat_radius = 1\nkinds = GGN, CN\nlevels = 4\ngrid = 9\nseed = 0\nrandom_rigs = 2\n",
    )
    .expect("desk config");
    cfg.threads = 0;
    cfg
}

const DESK_CLOUDS: usize = 8;
const DESK_POINTS: usize = 6000;

fn desk_references(cfg: &RunConfig) -> Vec<PointCloud> {
    (0..DESK_CLOUDS).map(|i| synthetic_cloud(i, cfg.seed, DESK_POINTS)).collect()
}

struct Desk {
    cfg: RunConfig,
    ladders: Vec<DistortionLadder>,
    pairs: Vec<RankPair>,
    model: Option<ScoreModel>,
}

// ---------------------------------------------------------------- criterion 1

fn criterion_1() -> Check {
    let sjtu = pair_count(9, 54, 7, 6);
    let wpc = pair_count(20, 54, 12, 3);
    let cfg = RunConfig::parse(
        "count_only = true\ncount_clouds = 9\ncount_viewpoints = 54\ncount_kinds = 7\ncount_levels = 6\n",
    )
    .map_err(|e| e.to_string())?;
    let via_cfg = pair_count(cfg.count.clouds, cfg.count.viewpoints, cfg.count.kinds, cfg.count.levels);
    ensure(
        sjtu == 71442 && wpc == 77760 && via_cfg == 71442,
        format!("SJTU-shaped {sjtu}, WPC-shaped {wpc}, SJTU via config {via_cfg}"),
    )
}

// ---------------------------------------------------------------- criterion 2

/// Per-pixel brute force: for every pixel scan all points, keep the nearest,
/// ties to the lower index.
fn oracle(cloud: &PointCloud, view: &ViewSetup, res: usize) -> (Vec<u32>, Vec<f64>) {
    let h = view.region_half_extent;
    let mut winner = vec![NO_POINT; res * res];
    let mut depth = vec![f64::INFINITY; res * res];
    for row in 0..res {
        for col in 0..res {
            let mut best: Option<(f64, usize)> = None;
            for (i, &p) in cloud.points().iter().enumerate() {
                let rel = p - view.viewpoint;
                if pixel_of(rel.dot(view.frame_u), rel.dot(view.frame_v), h, res) != Some((col, row)) {
                    continue;
                }
                let d = rel.dot(-view.direction);
                match best {
                    Some((bd, _)) if bd <= d => {}
                    _ => best = Some((d, i)),
                }
            }
            if let Some((d, i)) = best {
                winner[row * res + col] = i as u32;
                depth[row * res + col] = d;
            }
        }
    }
    (winner, depth)
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut pixels = 0usize;
    for trial in 0..100 {
        let n = rng.random_range(1..=100);
        let mut pts: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0), rng.random_range(0.0..0.5)))
            .collect();
        // duplicates exercise the equal-depth rule
        for k in 0..n / 10 {
            pts[n - 1 - k] = pts[k];
        }
        let colors = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let cloud = PointCloud::new(format!("r{trial}"), pts, colors).map_err(|e| e.to_string())?;
        let res = rng.random_range(16..=32);
        let cfg = RenderConfig {
            resolution: res,
            splat_radius: 0,
        };
        let rot = random_rotation(&mut rng);
        let margin = rng.random_range(1.0..2.0);
        let summary = cloud.summary();
        let views = match rotated_viewpoints(&summary, margin, &rot) {
            Ok(v) => v,
            Err(_) => continue,
        };
        for v in &views {
            let img = render(&cloud, v, &cfg).map_err(|e| e.to_string())?;
            let (w, d) = oracle(&cloud, v, res);
            if img.winner != w {
                return Err(format!("winner mismatch in trial {trial}, face {}", v.face_index));
            }
            let same = img.depth.iter().zip(&d).all(|(a, b)| a.to_bits() == b.to_bits());
            if !same {
                return Err(format!("depth mismatch in trial {trial}, face {}", v.face_index));
            }
            pixels += res * res;
        }
    }
    Ok(format!("100 clouds x 6 faces bit-exact over {pixels} pixels"))
}

// ---------------------------------------------------------------- criterion 3

fn brute_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Rank of each value: 1 + number strictly smaller + half the other ties.
fn brute_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&u| u < v).count() as f64;
            let equal = x.iter().filter(|&&u| u == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn brute_kendall(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    let n = x.len();
    for i in 0..n {
        for j in i + 1..n {
            let sx = (x[i] - x[j]).signum() as i64 * (x[i] != x[j]) as i64;
            let sy = (y[i] - y[j]).signum() as i64 * (y[i] != y[j]) as i64;
            if sx == 0 {
                tx += 1;
            }
            if sy == 0 {
                ty += 1;
            }
            if sx * sy > 0 {
                c += 1;
            } else if sx * sy < 0 {
                d += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    if n0 == tx || n0 == ty {
        return None;
    }
    Some((c - d) as f64 / (((n0 - tx) * (n0 - ty)) as f64).sqrt())
}

fn vectors(n: usize) -> Vec<Vec<f64>> {
    (0..3usize.pow(n as u32))
        .map(|mut k| {
            (0..n)
                .map(|_| {
                    let v = (k % 3) as f64 + 1.0;
                    k /= 3;
                    v
                })
                .collect()
        })
        .collect()
}

fn compare(x: &[f64], y: &[f64]) -> Result<(), String> {
    let close = |a: Option<f64>, b: Result<f64, pcqa_view_core::Error>, name: &str| match (a, b) {
        (None, Err(_)) => Ok(()),
        (Some(a), Ok(b)) if (a - b).abs() <= 1e-12 => Ok(()),
        (Some(a), Ok(b)) if a == b => Ok(()),
        (a, b) => Err(format!("{name} {x:?} {y:?}: oracle {a:?} vs {b:?}")),
    };
    close(brute_pearson(x, y), plcc(x, y), "plcc")?;
    close(brute_pearson(&brute_ranks(x), &brute_ranks(y)), srcc(x, y), "srcc")?;
    let k = brute_kendall(x, y);
    match (k, krcc(x, y)) {
        (None, Err(_)) => Ok(()),
        (Some(a), Ok(b)) if a == b => Ok(()),
        (a, b) => Err(format!("krcc {x:?} {y:?}: oracle {a:?} vs {b:?}")),
    }
}

fn criterion_3() -> Check {
    let mut checked = 0usize;
    for n in 1..=8usize {
        let all = vectors(n);
        if n < 3 {
            for x in &all {
                for y in &all {
                    if plcc(x, y).is_ok() || srcc(x, y).is_ok() || krcc(x, y).is_ok() {
                        return Err(format!("length {n} accepted"));
                    }
                }
            }
            continue;
        }
        all.par_iter().try_for_each(|x| all.iter().try_for_each(|y| compare(x, y)))?;
        checked += all.len() * all.len();
    }
    // hand-checked ties: x = [1,2,2,3], y = [1,3,2,4]
    let x = [1.0, 2.0, 2.0, 3.0];
    let y = [1.0, 3.0, 2.0, 4.0];
    let tau = krcc(&x, &y).map_err(|e| e.to_string())?;
    let rho = srcc(&x, &y).map_err(|e| e.to_string())?;
    let hand = tau == 5.0 / 30f64.sqrt() && (rho - 4.5 / 22.5f64.sqrt()).abs() < 1e-15;
    ensure(hand, format!("all {checked} series pairs of length 3..8 match the oracles; hand ties ok"))
}

// ---------------------------------------------------------------- criterion 4

fn probe_gradients<P: Parameters + Clone>(
    model: &P,
    analytic: &[f64],
    mut value: impl FnMut(&P) -> f64,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, f64), String> {
    let base = model.flatten();
    let eps = 1e-5;
    let mut probe = model.clone();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..4000 {
        if checked >= 60 {
            break;
        }
        let i = rng.random_range(0..base.len());
        let mut w = base.clone();
        w[i] = base[i] + eps;
        probe.assign(&w);
        let up = value(&probe);
        w[i] = base[i] - eps;
        probe.assign(&w);
        let down = value(&probe);
        let numeric = (up - down) / (2.0 * eps);
        let scale = numeric.abs().max(analytic[i].abs());
        if scale < 1e-6 {
            continue;
        }
        let rel = (numeric - analytic[i]).abs() / scale;
        worst = worst.max(rel);
        if rel >= 1e-4 {
            return Err(format!("parameter {i}: analytic {} numeric {numeric}", analytic[i]));
        }
        checked += 1;
    }
    Ok((checked, worst))
}

fn toy_pairs(rng: &mut ChaCha8Rng, n: usize) -> Vec<RankPair> {
    let feats = |rng: &mut ChaCha8Rng| ImageFeatures((0..FEATURE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect());
    (0..n)
        .map(|i| RankPair {
            provenance: PairProvenance {
                cloud_id: "toy".into(),
                kind: DistortionKind::ColorNoise,
                level_a: 0,
                level_b: 1,
                face: 0,
                candidate_index: i,
            },
            label: (i % 2) as f64,
            features_a: feats(rng),
            features_b: feats(rng),
        })
        .collect()
}

fn offset_records(refs: &[PointCloud], rigs: usize, fraction: f64) -> Result<Vec<DovRecord>, String> {
    let cfg = DovConfig {
        n_v: 9,
        margin: 1.25,
        render: RenderConfig::default(),
        random_rigs: rigs,
        seed: 5,
    };
    let mut out = Vec::new();
    for c in refs {
        for (rig, views) in rigs_for(c, c.id(), &cfg).map_err(|e| e.to_string())?.into_iter().enumerate() {
            for v in views {
                let h = v.region_half_extent;
                out.push(DovRecord {
                    cloud_id: c.id().to_string(),
                    distortion: Variant::REFERENCE,
                    face_index: v.face_index,
                    default_viewpoint: v.viewpoint,
                    optimized_viewpoint: v.lift(fraction * h, 0.0),
                    candidate_scores: vec![None; 9],
                    candidate_rank_of_optimized: 1,
                    optimized_index: 5,
                    rig,
                    center: v.center,
                    frame_u: v.frame_u,
                    frame_v: v.frame_v,
                    region_half_extent: h,
                });
            }
        }
    }
    Ok(out)
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pairs = toy_pairs(&mut rng, 8);
    let mut model = ScoreModel::init(4, SsvrnHyper::default());
    model.fit_normalization(pairs.iter().flat_map(|p| [&p.features_a, &p.features_b]));
    let refs: Vec<&RankPair> = pairs.iter().collect();
    let (_, g) = pair_objective(&model, &refs);
    let (n_s, worst_s) = probe_gradients(&model, &g.flatten(), |m| pair_objective_value(m, &refs), &mut rng)?;

    let clouds: Vec<PointCloud> = (0..2).map(|i| synthetic_cloud(i, 4, 400)).collect();
    let records = offset_records(&clouds, 0, 0.3)?;
    let records = vec![records[1].clone(), records[8].clone()];
    let store: BTreeMap<String, PointCloud> = clouds.iter().map(|c| (c.id().to_string(), c.clone())).collect();
    let hp = CavgnHyper {
        tokens: 16,
        ..CavgnHyper::default()
    };
    let stats = record_stats(&records, &store, hp.tokens).map_err(|e| e.to_string())?;
    let rows: Vec<TrainingRow<'_>> = records
        .iter()
        .map(|r| TrainingRow {
            label: record_label(r),
            stats: &stats[&r.cloud_key()],
            view: r.view().unwrap(),
            target: r.optimized_viewpoint,
        })
        .collect();
    let row_refs: Vec<&TrainingRow<'_>> = rows.iter().collect();
    let mut cavgn = CavgnModel::init(4, hp);
    let last = cavgn.head.len() - 1;
    cavgn.head[last] = Dense::init(cavgn.head[last].inputs, 2, 0.2, &mut rng);
    let (_, gc) = cavgn_objective(&cavgn, &row_refs).map_err(|e| e.to_string())?;
    let (n_c, worst_c) = probe_gradients(
        &cavgn,
        &gc.flatten(),
        |m| cavgn_objective_value(m, &row_refs).unwrap(),
        &mut rng,
    )?;
    ensure(
        n_s >= 50 && n_c >= 50,
        format!("SSVRN {n_s} probes (worst rel {worst_s:.1e}), CAVGN {n_c} probes (worst rel {worst_c:.1e})"),
    )
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5(desk: &mut Desk) -> Check {
    let hp = desk.cfg.ssvrn_hyper();
    let (model, hist) = train_ssvrn(&desk.pairs, &hp).map_err(|e| e.to_string())?;
    let (_, val) = split_indices(desk.pairs.len(), hp.split, hp.seed);
    let held: Vec<RankPair> = val.iter().map(|&i| desk.pairs[i].clone()).collect();
    let acc = ranking_accuracy(&model, &held).map_err(|e| e.to_string())?;
    desk.model = Some(model);
    ensure(
        acc >= 0.80,
        format!(
            "held-out accuracy {acc:.4} on {} of {} pairs after {} epochs",
            held.len(),
            desk.pairs.len(),
            hist.len()
        ),
    )
}

// ---------------------------------------------------------------- criterion 6

fn criterion_6(desk: &Desk) -> Check {
    let model = desk.model.as_ref().ok_or("criterion 5 produced no model")?;
    let records = build_dov_all(&desk.ladders, model, &desk.cfg).map_err(|e| e.to_string())?;
    let center = (desk.cfg.grid - 1) / 2;
    let mut bad = 0;
    for r in &records {
        let opt = r.optimized_score();
        let def = r.candidate_scores[center];
        match (opt, def) {
            (Some(o), Some(d)) if o <= d => {}
            (Some(_), None) => {}
            _ => bad += 1,
        }
    }
    ensure(bad == 0, format!("{} of {} records satisfy score(optimized) <= score(default)", records.len() - bad, records.len()))
}

// ---------------------------------------------------------------- criterion 7

fn criterion_7(desk: &Desk) -> Check {
    let model = desk.model.as_ref().ok_or("criterion 5 produced no model")?;
    let data = eval_dataset(&desk.ladders, None).map_err(|e| e.to_string())?;
    let reports = evaluate_rank_sweep(&data, model, &desk.cfg).map_err(|e| e.to_string())?;
    let s: Vec<f64> = reports.iter().map(|r| r.srcc).collect();
    let ranks: Vec<f64> = (1..=s.len()).map(|k| k as f64).collect();
    let trend = srcc(&ranks, &s).unwrap_or(0.0);
    let first = s[0];
    let last = *s.last().unwrap();
    let listing: Vec<String> = s.iter().map(|v| format!("{v:.4}")).collect();
    ensure(
        last >= first && trend > 0.0,
        format!("SRCC by rank [{}], rank-vs-SRCC Spearman {trend:.3}", listing.join(", ")),
    )
}

// ---------------------------------------------------------------- criterion 8

fn random_view(rng: &mut ChaCha8Rng) -> ViewSetup {
    let lo = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
    let ext = Vec3::new(rng.random_range(0.01..3.0), rng.random_range(0.01..3.0), rng.random_range(0.01..3.0));
    let summary = pcqa_view_core::CloudSummary {
        centroid: lo + ext * 0.5,
        bbox_min: lo,
        bbox_max: lo + ext,
        diagonal: ext.norm(),
    };
    let rot = random_rotation(rng);
    let views = rotated_viewpoints(&summary, rng.random_range(1.0..3.0), &rot).expect("nondegenerate box");
    views[rng.random_range(0..6)]
}

fn criterion_8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let hp = CavgnHyper::default();
    let mut draws = 0;
    let mut worst: f64 = 0.0;
    let cloud = synthetic_cloud(0, 8, 800);
    let stats = pcqa_view_core::cavgn::token_stats(&cloud, 64).map_err(|e| e.to_string())?;
    let cloud_views = rotated_viewpoints(&cloud.summary(), 1.25, &random_rotation(&mut rng)).unwrap();
    for m in 0..100 {
        let mut model = CavgnModel::init(1000 + m, hp);
        let last = model.head.len() - 1;
        let gain = 10f64.powf(rng.random_range(-2.0..2.0));
        model.head[last] = Dense::init(model.head[last].inputs, 2, gain, &mut rng);
        for k in 0..100 {
            let (view, p) = if k == 0 {
                let v = cloud_views[m as usize % 6];
                (v, model.predict(&stats, &v).map_err(|e| e.to_string())?)
            } else {
                let v = random_view(&mut rng);
                let fused: Vec<f64> = (0..2 * hp.width).map(|_| rng.random_range(-3.0..3.0)).collect();
                (v, generate_viewpoint(&model, &fused, &v))
            };
            let h = view.region_half_extent;
            let off = (p - view.viewpoint).dot(view.direction).abs();
            worst = worst.max(off / h);
            if off > 1e-9 * h {
                return Err(format!("draw {draws}: offset {off:e} exceeds 1e-9 h"));
            }
            draws += 1;
        }
    }
    let part_a = format!("(a) {draws} draws in plane, worst |offset.d|/h {worst:.1e}");

    let refs: Vec<PointCloud> = (0..DESK_CLOUDS).map(|i| synthetic_cloud(i, 0, DESK_POINTS)).collect();
    let records = offset_records(&refs, 2, 1.0 / 3.0)?;
    let store: BTreeMap<String, PointCloud> = refs.iter().map(|c| (c.id().to_string(), c.clone())).collect();
    let hp = CavgnHyper {
        learning_rate: 1e-3,
        decay_factor: 0.5,
        decay_every: 10,
        epochs: 30,
        seed: 8,
        ..CavgnHyper::default()
    };
    let stats = record_stats(&records, &store, hp.tokens).map_err(|e| e.to_string())?;
    let (_, val) = split_indices(records.len(), hp.split, hp.seed);
    let held: Vec<TrainingRow<'_>> = val
        .iter()
        .map(|&i| TrainingRow {
            label: record_label(&records[i]),
            stats: &stats[&records[i].cloud_key()],
            view: records[i].view().unwrap(),
            target: records[i].optimized_viewpoint,
        })
        .collect();
    let held_refs: Vec<&TrainingRow<'_>> = held.iter().collect();
    let before = cavgn_objective_value(&CavgnModel::init(hp.seed, hp), &held_refs).map_err(|e| e.to_string())?;
    let (model, _) = train_cavgn_with_stats(&records, &stats, &hp).map_err(|e| e.to_string())?;
    let after = cavgn_objective_value(&model, &held_refs).map_err(|e| e.to_string())?;
    ensure(
        after <= 0.5 * before,
        format!(
            "{part_a}; (b) held-out angle loss {before:.3e} -> {after:.3e} ({:.1}%) on {} records",
            100.0 * after / before,
            held.len()
        ),
    )
}

// ---------------------------------------------------------------- criterion 9

fn run_cli(args: &[&str], dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pcqa-view"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(())
}

fn criterion_9() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    std::fs::write(
        dir.join("desk.cfg"),
        "resolution = 64\nkinds = GGN, CN\nlevels = 4\ngrid = 9\nseed = 0\nrandom_rigs = 2\ncavgn_epochs = 2\n",
    )
    .map_err(|e| e.to_string())?;
    let c = ["--config", "desk.cfg"];
    let with = |args: &[&str], threads: &str| -> Result<(), String> {
        let mut a: Vec<&str> = args.to_vec();
        a.extend_from_slice(&c);
        a.extend_from_slice(&["--threads", threads]);
        run_cli(&a, dir)
    };
    with(&["synth", "--out", "clouds", "--count", "8", "--points", "6000"], "0")?;
    with(&["distort", "--in", "clouds", "--out", "ladders"], "0")?;
    let mut compared = Vec::new();
    for (run, threads) in [("1", "1"), ("2", "0")] {
        let p = format!("pairs{run}.jsonl");
        let m = format!("ssvrn{run}.json");
        let d = format!("dov{run}.jsonl");
        let g = format!("cavgn{run}.json");
        with(&["pairs", "--store", "ladders", "--out", &p], threads)?;
        with(&["train-ssvrn", "--pairs", &p, "--out", &m], threads)?;
        with(&["build-dov", "--model", &m, "--store", "ladders", "--out", &d], threads)?;
        with(&["train-cavgn", "--dov", &d, "--store", "ladders", "--out", &g], threads)?;
    }
    for (a, b) in [
        ("pairs1.jsonl", "pairs2.jsonl"),
        ("ssvrn1.json", "ssvrn2.json"),
        ("dov1.jsonl", "dov2.jsonl"),
        ("cavgn1.json", "cavgn2.json"),
    ] {
        let x = std::fs::read(dir.join(a)).map_err(|e| e.to_string())?;
        let y = std::fs::read(dir.join(b)).map_err(|e| e.to_string())?;
        if x != y {
            return Err(format!("{a} and {b} differ"));
        }
        compared.push(format!("{a} ({} bytes)", x.len()));
    }
    Ok(format!("identical across runs with 1 and all threads: {}", compared.join(", ")))
}

// ---------------------------------------------------------------- driver

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn run(id: u32, name: &'static str, budget: Duration, f: impl FnOnce() -> Check) -> Outcome {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let (mut pass, mut detail) = match result {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    if elapsed > budget {
        pass = false;
        detail = format!("{detail}; over the {}s budget", budget.as_secs());
    }
    let o = Outcome {
        id,
        name,
        pass,
        detail,
        elapsed,
    };
    println!(
        "criterion {} [{}]: {} ({:.1}s) {}",
        o.id,
        o.name,
        if o.pass { "PASS" } else { "FAIL" },
        o.elapsed.as_secs_f64(),
        o.detail
    );
    o
}

fn main() {
    let secs = Duration::from_secs;
    let mut outcomes = vec![
        run(1, "pair combinatorics", secs(1), criterion_1),
        run(2, "projection oracle", secs(30), criterion_2),
        run(3, "metric oracles", secs(60), criterion_3),
        run(4, "gradient integrity", secs(60), criterion_4),
    ];

    let prep = Instant::now();
    let cfg = desk_config();
    let ladders = distort_all(&desk_references(&cfg), &cfg).expect("desk ladders");
    let pairs = generate_all_pairs(&ladders, &cfg).expect("desk pairs");
    let prep_time = prep.elapsed();
    println!(
        "desk dataset: {} clouds x {:?} x {} levels, {} pairs in {:.1}s",
        ladders.len(),
        cfg.kinds.iter().map(|k| k.code()).collect::<Vec<_>>(),
        cfg.levels,
        pairs.len(),
        prep_time.as_secs_f64()
    );
    let mut desk = Desk {
        cfg,
        ladders,
        pairs,
        model: None,
    };
    outcomes.push(run(5, "SSVRN desk-scale learning", secs(600) - prep_time, || criterion_5(&mut desk)));
    outcomes.push(run(6, "optimized never worse", secs(600), || criterion_6(&desk)));
    outcomes.push(run(7, "worse-the-better direction", secs(600), || criterion_7(&desk)));
    outcomes.push(run(8, "CAVGN constraint and learning", secs(600), criterion_8));
    outcomes.push(run(9, "determinism", secs(300), criterion_9));

    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        outcomes.len() - failed.len(),
        failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" (criteria {failed:?})")
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
