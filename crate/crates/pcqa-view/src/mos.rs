//! Mean opinion scores from `cloud_id,score` CSV files.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::Deserialize;

#[derive(Deserialize)]
struct Row {
    cloud_id: String,
    score: f64,
}

/// Scores keyed by cloud id. A header row `cloud_id,score` is expected.
pub fn read_mos(path: &Path) -> anyhow::Result<BTreeMap<String, f64>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut out = BTreeMap::new();
    for row in r.deserialize() {
        let row: Row = row.with_context(|| format!("reading {}", path.display()))?;
        if !row.score.is_finite() {
            anyhow::bail!("{}: non-finite score for {}", path.display(), row.cloud_id);
        }
        out.insert(row.cloud_id, row.score);
    }
    Ok(out)
}
