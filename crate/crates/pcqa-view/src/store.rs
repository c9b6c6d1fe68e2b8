//! Cloud stores: directories of PLY files named by cloud id.
//!
//! A ladder store holds `<id>.ply` for each reference and
//! `<id>__<KIND>_<level>.ply` for each distorted variant.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use pcqa_view_core::distortion::{rung_seed, variant_id, DistortionLadder, DistortionSpec};
use pcqa_view_core::PointCloud;
use rayon::prelude::*;

use crate::config::{RunConfig, Stage};
use crate::ply::{load_ply, save_ply};

/// PLY files of a directory, sorted by name.
pub fn list_plys(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply")))
        .collect();
    out.sort();
    Ok(out)
}

/// Every PLY in `dir`, keyed by file stem.
pub fn load_dir(dir: &Path) -> anyhow::Result<BTreeMap<String, PointCloud>> {
    let paths = list_plys(dir)?;
    let clouds: Vec<PointCloud> = paths
        .par_iter()
        .map(|p| load_ply(p).with_context(|| format!("loading {}", p.display())))
        .collect::<anyhow::Result<_>>()?;
    Ok(clouds.into_iter().map(|c| (c.id().to_string(), c)).collect())
}

pub fn is_reference_id(id: &str) -> bool {
    !id.contains("__")
}

/// Seed of one reference's ladder.
pub fn ladder_seed(cfg: &RunConfig, reference_id: &str) -> u64 {
    pcqa_view_core::math::sub_seed(cfg.stage_seed(Stage::Distort), reference_id)
}

/// Write the reference and every variant of each ladder into `dir`.
pub fn write_ladders(ladders: &[DistortionLadder], dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    let clouds: Vec<&PointCloud> = ladders
        .iter()
        .flat_map(|l| std::iter::once(&l.reference).chain(l.variants.iter().map(|(_, c)| c)))
        .collect();
    clouds.par_iter().try_for_each(|c| {
        let p = dir.join(format!("{}.ply", c.id()));
        save_ply(c, &p).with_context(|| format!("writing {}", p.display()))
    })
}

/// Rebuild ladders from a store written by [`write_ladders`].
pub fn ladders_from_store(store: &BTreeMap<String, PointCloud>, cfg: &RunConfig) -> anyhow::Result<Vec<DistortionLadder>> {
    let mut out = Vec::new();
    for (id, reference) in store.iter().filter(|(id, _)| is_reference_id(id)) {
        let seed = ladder_seed(cfg, id);
        let mut variants = Vec::new();
        for &kind in &cfg.kinds {
            for level in 1..=cfg.levels {
                let spec = DistortionSpec::new(kind, level, cfg.levels, rung_seed(seed, kind, level))?;
                let key = variant_id(id, &spec);
                let cloud = store
                    .get(&key)
                    .with_context(|| format!("store lacks {key}; run distort with the same kinds, levels and seed"))?;
                variants.push((spec, cloud.clone()));
            }
        }
        out.push(DistortionLadder {
            reference: reference.clone(),
            variants,
            kinds: cfg.kinds.clone(),
            levels: cfg.levels,
        });
    }
    if out.is_empty() {
        anyhow::bail!("no reference clouds in store");
    }
    Ok(out)
}

/// Every cloud of the given ladders keyed by id.
pub fn ladder_clouds(ladders: &[DistortionLadder]) -> BTreeMap<String, PointCloud> {
    ladders
        .iter()
        .flat_map(|l| std::iter::once(&l.reference).chain(l.variants.iter().map(|(_, c)| c)))
        .map(|c| (c.id().to_string(), c.clone()))
        .collect()
}
