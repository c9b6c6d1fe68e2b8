//! Graded synthetic degradations and level ladders.
//!
//! Level `l` of `L` maps to an intensity `a = l / L`:
//!
//! | kind | effect at intensity `a` |
//! |------|-------------------------|
//! | CN   | iid N(0, (40a)^2) added to every color channel, clamped to [0, 255] |
//! | GGN  | iid N(0, (0.01 a diag)^2) added to every coordinate |
//! | DS   | uniformly random subset of `1 - 0.8a` of the points kept (at least one) |
//! | OT   | coordinates snapped to a grid of `2^(10 - round(6a))` cells per bbox axis, coincident points merged with averaged color |

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cloud::{summarize, PointCloud};
use crate::error::{invalid, Error, Result};
use crate::math::{round, splitmix64, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DistortionKind {
    #[serde(rename = "CN")]
    ColorNoise,
    #[serde(rename = "GGN")]
    GeometryGaussianNoise,
    #[serde(rename = "DS")]
    Downsample,
    #[serde(rename = "OT")]
    OctreeQuantize,
}

impl DistortionKind {
    pub const ALL: [DistortionKind; 4] = [
        DistortionKind::OctreeQuantize,
        DistortionKind::ColorNoise,
        DistortionKind::Downsample,
        DistortionKind::GeometryGaussianNoise,
    ];

    pub fn code(self) -> &'static str {
        match self {
            DistortionKind::ColorNoise => "CN",
            DistortionKind::GeometryGaussianNoise => "GGN",
            DistortionKind::Downsample => "DS",
            DistortionKind::OctreeQuantize => "OT",
        }
    }

    fn tag(self) -> u64 {
        match self {
            DistortionKind::ColorNoise => 1,
            DistortionKind::GeometryGaussianNoise => 2,
            DistortionKind::Downsample => 3,
            DistortionKind::OctreeQuantize => 4,
        }
    }
}

impl fmt::Display for DistortionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for DistortionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "CN" | "cn" | "color-noise" => Ok(DistortionKind::ColorNoise),
            "GGN" | "ggn" | "geometry-noise" => Ok(DistortionKind::GeometryGaussianNoise),
            "DS" | "ds" | "downsample" => Ok(DistortionKind::Downsample),
            "OT" | "ot" | "octree" => Ok(DistortionKind::OctreeQuantize),
            other => Err(invalid(format!("unknown distortion kind '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    pub level: u32,
    pub levels: u32,
    pub seed: u64,
}

impl DistortionSpec {
    pub fn new(kind: DistortionKind, level: u32, levels: u32, seed: u64) -> Result<Self> {
        let spec = DistortionSpec {
            kind,
            level,
            levels,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(invalid("distortion ladder needs at least 2 levels"));
        }
        if self.level < 1 || self.level > self.levels {
            return Err(invalid(format!(
                "level {} outside 1..={}",
                self.level, self.levels
            )));
        }
        Ok(())
    }

    pub fn intensity(&self) -> f64 {
        self.level as f64 / self.levels as f64
    }

    /// File-name suffix `<kind>_<level>`.
    pub fn suffix(&self) -> String {
        format!("{}_{}", self.kind.code(), self.level)
    }
}

/// Name of a degraded variant: `<id>__<kind>_<level>`.
pub fn variant_id(reference_id: &str, spec: &DistortionSpec) -> String {
    format!("{}__{}", reference_id, spec.suffix())
}

pub fn apply_distortion(cloud: &PointCloud, spec: &DistortionSpec) -> Result<PointCloud> {
    spec.validate()?;
    let a = spec.intensity();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let id = variant_id(cloud.id(), spec);
    match spec.kind {
        DistortionKind::ColorNoise => {
            let normal = Normal::new(0.0, 40.0 * a).map_err(|e| invalid(format!("{e}")))?;
            let colors = cloud
                .colors()
                .iter()
                .map(|c| {
                    let mut out = [0u8; 3];
                    for (o, &ch) in out.iter_mut().zip(c) {
                        let v: f64 = ch as f64 + normal.sample(&mut rng);
                        *o = round(v).clamp(0.0, 255.0) as u8;
                    }
                    out
                })
                .collect();
            PointCloud::new(id, cloud.points().to_vec(), colors)
        }
        DistortionKind::GeometryGaussianNoise => {
            let sigma = 0.01 * a * summarize(cloud).diagonal;
            let points = if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).map_err(|e| invalid(format!("{e}")))?;
                cloud
                    .points()
                    .iter()
                    .map(|&p| {
                        let dx = normal.sample(&mut rng);
                        let dy = normal.sample(&mut rng);
                        let dz = normal.sample(&mut rng);
                        p + Vec3::new(dx, dy, dz)
                    })
                    .collect()
            } else {
                cloud.points().to_vec()
            };
            PointCloud::new(id, points, cloud.colors().to_vec())
        }
        DistortionKind::Downsample => {
            let n = cloud.len();
            let keep = (round(n as f64 * (1.0 - 0.8 * a)) as usize).clamp(1, n);
            let mut picked = index::sample(&mut rng, n, keep).into_vec();
            picked.sort_unstable();
            if picked.is_empty() {
                return Err(Error::EmptyCloud);
            }
            let points = picked.iter().map(|&i| cloud.points()[i]).collect();
            let colors = picked.iter().map(|&i| cloud.colors()[i]).collect();
            PointCloud::new(id, points, colors)
        }
        DistortionKind::OctreeQuantize => {
            let depth = 10 - round(6.0 * a) as i32;
            Ok(octree_quantize(cloud, 1u64 << depth).with_id(id))
        }
    }
}

/// Snap every coordinate to the nearest node of a regular grid with `cells`
/// cells per bbox axis and merge points that land on the same node.
pub fn octree_quantize(cloud: &PointCloud, cells: u64) -> PointCloud {
    let s = summarize(cloud);
    let extent = s.bbox_max - s.bbox_min;
    let step = |e: f64| if e > 0.0 { e / cells as f64 } else { 1.0 };
    let steps = [step(extent.x), step(extent.y), step(extent.z)];
    let lo = s.bbox_min.to_array();

    // key -> (first occurrence, color sums, count)
    let mut cells_map: BTreeMap<[i64; 3], (usize, [u64; 3], u64)> = BTreeMap::new();
    for (i, (p, c)) in cloud.points().iter().zip(cloud.colors()).enumerate() {
        let pa = p.to_array();
        let mut key = [0i64; 3];
        for ax in 0..3 {
            key[ax] = round((pa[ax] - lo[ax]) / steps[ax]) as i64;
        }
        let entry = cells_map.entry(key).or_insert((i, [0; 3], 0));
        for ch in 0..3 {
            entry.1[ch] += c[ch] as u64;
        }
        entry.2 += 1;
    }
    let mut merged: Vec<(usize, [i64; 3], [u64; 3], u64)> = cells_map
        .into_iter()
        .map(|(k, (first, sums, n))| (first, k, sums, n))
        .collect();
    merged.sort_unstable_by_key(|m| m.0);

    let mut points = Vec::with_capacity(merged.len());
    let mut colors = Vec::with_capacity(merged.len());
    for (_, key, sums, n) in merged {
        let mut q = [0.0; 3];
        for ax in 0..3 {
            q[ax] = lo[ax] + key[ax] as f64 * steps[ax];
        }
        points.push(Vec3::from_array(q));
        colors.push([
            ((sums[0] + n / 2) / n) as u8,
            ((sums[1] + n / 2) / n) as u8,
            ((sums[2] + n / 2) / n) as u8,
        ]);
    }
    PointCloud::new(cloud.id(), points, colors).expect("quantized cloud keeps at least one point")
}

/// Sequential composition, e.g. DS followed by CN for the mixed "D+C" class.
pub fn apply_sequence(cloud: &PointCloud, specs: &[DistortionSpec]) -> Result<PointCloud> {
    let mut out = cloud.clone();
    for spec in specs {
        out = apply_distortion(&out, spec)?;
    }
    if !specs.is_empty() {
        let suffix: Vec<String> = specs.iter().map(|s| s.suffix()).collect();
        out = out.with_id(format!("{}__{}", cloud.id(), suffix.join("+")));
    }
    Ok(out)
}

/// Reference plus `kinds.len() * levels` degraded variants, kind-major.
#[derive(Clone, Debug)]
pub struct DistortionLadder {
    pub reference: PointCloud,
    pub variants: Vec<(DistortionSpec, PointCloud)>,
    pub kinds: Vec<DistortionKind>,
    pub levels: u32,
}

impl DistortionLadder {
    /// Cloud at `level` of `kind`; level 0 is the reference.
    pub fn at(&self, kind: DistortionKind, level: u32) -> Option<&PointCloud> {
        if level == 0 {
            return Some(&self.reference);
        }
        self.variants
            .iter()
            .find(|(s, _)| s.kind == kind && s.level == level)
            .map(|(_, c)| c)
    }
}

/// Seed for one rung: `seed XOR mix(kind, level)`.
pub fn rung_seed(seed: u64, kind: DistortionKind, level: u32) -> u64 {
    seed ^ splitmix64((kind.tag() << 32) | level as u64)
}

pub fn build_ladder(
    cloud: &PointCloud,
    kinds: &[DistortionKind],
    levels: u32,
    seed: u64,
) -> Result<DistortionLadder> {
    if kinds.is_empty() {
        return Err(invalid("no distortion kinds requested"));
    }
    if levels < 2 {
        return Err(invalid("distortion ladder needs at least 2 levels"));
    }
    let mut variants = Vec::with_capacity(kinds.len() * levels as usize);
    for &kind in kinds {
        for level in 1..=levels {
            let spec = DistortionSpec::new(kind, level, levels, rung_seed(seed, kind, level))?;
            variants.push((spec, apply_distortion(cloud, &spec)?));
        }
    }
    Ok(DistortionLadder {
        reference: cloud.clone(),
        variants,
        kinds: kinds.to_vec(),
        levels,
    })
}

/// Monotone stand-in for a mean opinion score: 100 for the reference,
/// `100 (1 - l / (L + 1))` for level `l` of `L`.
pub fn pseudo_mos(level: u32, levels: u32) -> f64 {
    100.0 * (1.0 - level as f64 / (levels as f64 + 1.0))
}
