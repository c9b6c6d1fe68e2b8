//! Flat `key = value` run configuration with `#` comments.
//!
//! Every stage draws its randomness from `sub_seed(seed, <stage>)`, with the
//! stage names listed in [`Stage`].

use std::path::{Path, PathBuf};
use std::str::FromStr;

use pcqa_view_core::cavgn::CavgnHyper;
use pcqa_view_core::distortion::DistortionKind;
use pcqa_view_core::geometry::{DEFAULT_MARGIN, SUPPORTED_GRIDS};
use pcqa_view_core::math::sub_seed;
use pcqa_view_core::render::RenderConfig;
use pcqa_view_core::ssvrn::SsvrnHyper;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("{key}: {msg}")]
    Value { key: String, msg: String },
    #[error("unknown key {0}")]
    UnknownKey(String),
    #[error("{0} does not exist")]
    MissingPath(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Distort,
    Pairs,
    Ssvrn,
    Dov,
    Cavgn,
    Eval,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Distort => "distort",
            Stage::Pairs => "pairs",
            Stage::Ssvrn => "ssvrn",
            Stage::Dov => "dov",
            Stage::Cavgn => "cavgn",
            Stage::Eval => "eval",
        }
    }
}

/// Dataset shape used when `pairs` only counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CountShape {
    pub clouds: u64,
    pub viewpoints: u64,
    pub kinds: u64,
    pub levels: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub clouds_dir: Option<PathBuf>,
    pub work_dir: Option<PathBuf>,
    pub dataset: String,
    pub render: RenderConfig,
    pub margin: f64,
    pub grid: usize,
    pub kinds: Vec<DistortionKind>,
    pub levels: u32,
    pub seed: u64,
    pub threads: usize,
    pub random_rigs: usize,
    pub ssvrn: SsvrnHyper,
    pub cavgn: CavgnHyper,
    pub count_only: bool,
    pub count: CountShape,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            clouds_dir: None,
            work_dir: None,
            dataset: "synthetic".into(),
            render: RenderConfig::default(),
            margin: DEFAULT_MARGIN,
            grid: 9,
            kinds: DistortionKind::ALL.to_vec(),
            levels: 5,
            seed: 0,
            threads: 0,
            random_rigs: 2,
            ssvrn: SsvrnHyper::default(),
            cavgn: CavgnHyper::default(),
            count_only: false,
            count: CountShape {
                clouds: 0,
                viewpoints: 0,
                kinds: 0,
                levels: 0,
            },
        }
    }
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::Value {
        key: key.into(),
        msg: format!("cannot parse {v:?}"),
    })
}

impl RunConfig {
    /// Parse config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                msg: "expected key = value".into(),
            })?;
            cfg.set(k.trim(), v.trim()).map_err(|e| match e {
                ConfigError::UnknownKey(k) => ConfigError::Syntax {
                    line: i + 1,
                    msg: format!("unknown key {k}"),
                },
                other => other,
            })?;
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
        Ok(Self::parse(&text)?)
    }

    /// Set one key; used by the parser and by command-line overrides.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "clouds_dir" => self.clouds_dir = Some(v.into()),
            "work_dir" => self.work_dir = Some(v.into()),
            "dataset" => self.dataset = v.into(),
            "resolution" => self.render.resolution = value(key, v)?,
            "splat_radius" => self.render.splat_radius = value(key, v)?,
            "margin" => self.margin = value(key, v)?,
            "grid" => self.grid = value(key, v)?,
            "kinds" => {
                self.kinds = v
                    .split(',')
                    .map(|s| s.trim().parse::<DistortionKind>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| ConfigError::Value {
                        key: key.into(),
                        msg: e.to_string(),
                    })?
            }
            "levels" => self.levels = value(key, v)?,
            "seed" => self.seed = value(key, v)?,
            "threads" => self.threads = value(key, v)?,
            "random_rigs" => self.random_rigs = value(key, v)?,
            // counts every rig, the canonical cube included
            "rigs_per_cloud" => {
                let n: usize = value(key, v)?;
                if n == 0 {
                    return Err(ConfigError::Value {
                        key: key.into(),
                        msg: "must be at least 1".into(),
                    });
                }
                self.random_rigs = n - 1;
            }
            "ssvrn_lr" => self.ssvrn.learning_rate = value(key, v)?,
            "ssvrn_epochs" => self.ssvrn.epochs = value(key, v)?,
            "ssvrn_decay_factor" => self.ssvrn.decay_factor = value(key, v)?,
            "ssvrn_decay_every" => self.ssvrn.decay_every = value(key, v)?,
            "ssvrn_batch" => self.ssvrn.batch_size = value(key, v)?,
            "ssvrn_split" => self.ssvrn.split = value(key, v)?,
            "cavgn_lr" => self.cavgn.learning_rate = value(key, v)?,
            "cavgn_epochs" => self.cavgn.epochs = value(key, v)?,
            "cavgn_decay_factor" => self.cavgn.decay_factor = value(key, v)?,
            "cavgn_decay_every" => self.cavgn.decay_every = value(key, v)?,
            "cavgn_batch" => self.cavgn.batch_size = value(key, v)?,
            "cavgn_split" => self.cavgn.split = value(key, v)?,
            "cavgn_tokens" => self.cavgn.tokens = value(key, v)?,
            "cavgn_width" => self.cavgn.width = value(key, v)?,
            "cavgn_embed" => self.cavgn.embed_width = value(key, v)?,
            "count_only" => self.count_only = value(key, v)?,
            "count_clouds" => self.count.clouds = value(key, v)?,
            "count_viewpoints" => self.count.viewpoints = value(key, v)?,
            "count_kinds" => self.count.kinds = value(key, v)?,
            "count_levels" => self.count.levels = value(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Apply `key=value` overrides.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), ConfigError> {
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: 0,
                msg: format!("override {o:?} is not key=value"),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        self.check()
    }

    fn check(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, msg: &str| {
            Err(ConfigError::Value {
                key: key.into(),
                msg: msg.into(),
            })
        };
        if !SUPPORTED_GRIDS.contains(&self.grid) {
            return bad("grid", "must be 9, 25 or 49");
        }
        if self.levels < 2 {
            return bad("levels", "must be at least 2");
        }
        if self.kinds.is_empty() {
            return bad("kinds", "must name at least one distortion");
        }
        if self.render.resolution < pcqa_view_core::render::MIN_RESOLUTION {
            return bad("resolution", "too small");
        }
        if !(self.margin >= 1.0) {
            return bad("margin", "must be at least 1");
        }
        if self.ssvrn.batch_size == 0 || self.cavgn.batch_size == 0 {
            return bad("batch", "must be positive");
        }
        Ok(())
    }

    /// Check that configured directories exist.
    pub fn validate_paths(&self) -> Result<(), ConfigError> {
        for p in [&self.clouds_dir, &self.work_dir].into_iter().flatten() {
            if !p.exists() {
                return Err(ConfigError::MissingPath(p.clone()));
            }
        }
        Ok(())
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        sub_seed(self.seed, stage.name())
    }

    pub fn ssvrn_hyper(&self) -> SsvrnHyper {
        SsvrnHyper {
            seed: self.stage_seed(Stage::Ssvrn),
            ..self.ssvrn
        }
    }

    pub fn cavgn_hyper(&self) -> CavgnHyper {
        CavgnHyper {
            seed: self.stage_seed(Stage::Cavgn),
            ..self.cavgn
        }
    }

    /// Candidate viewpoints per cloud: six faces times the grid.
    pub fn viewpoints(&self) -> usize {
        6 * self.grid
    }
}
