//! Run configuration: every tunable with its default, TOML in and out.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::grid::GridLayout;
use crate::metrics::MetricsConfig;
use crate::objective::{ObjectiveConfig, RobustChamferParams, DEFAULT_ALPHA, DEFAULT_W_ISOMETRY};
use crate::optim::{OptimSchedule, OptimizerSettings, PreconditionOrder};
use crate::{Error, Result};

pub const DEFAULT_LEVELS: u32 = 10;
/// Grid learning rate factor when smoothing preconditioning is off.
pub const UNPRECONDITIONED_LR_FACTOR: f64 = 0.1;

/// Epoch budget when none is configured: 2000 for a 17-frame sequence,
/// growing linearly with length, never below 2000 nor above 10000.
pub fn default_epochs(frames: usize) -> usize {
    let scaled = (2000.0 * frames as f64 / 17.0).round() as usize;
    scaled.clamp(2000, 10_000)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Frames in order. Exclusive with `glob`.
    pub frames: Vec<PathBuf>,
    /// Pattern whose matches are sorted lexicographically.
    pub glob: Option<String>,
    pub template: Option<PathBuf>,
    /// Frame the template was reconstructed from; defaults to the selected
    /// keyframe.
    pub template_frame: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputConfig,
    pub output_dir: PathBuf,
    pub levels: u32,
    pub multires: bool,
    pub precondition: bool,
    pub precondition_order: PreconditionOrder,
    pub isometry: bool,
    pub optimize_mesh: bool,
    pub alpha: f64,
    pub w_isometry: f64,
    /// `None` picks [`default_epochs`] for the sequence length.
    pub epochs: Option<usize>,
    pub seed: u64,
    pub log_interval: usize,
    /// Gaussian input noise, percent of each frame's bounding-box diagonal.
    pub noise_pct: f64,
    pub save_grids: Option<PathBuf>,
    pub load_grids: Option<PathBuf>,
    pub schedule: OptimSchedule,
    pub metrics: MetricsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: InputConfig::default(),
            output_dir: PathBuf::from("out"),
            levels: DEFAULT_LEVELS,
            multires: true,
            precondition: true,
            precondition_order: PreconditionOrder::default(),
            isometry: true,
            optimize_mesh: true,
            alpha: DEFAULT_ALPHA,
            w_isometry: DEFAULT_W_ISOMETRY,
            epochs: None,
            seed: 0,
            log_interval: 50,
            noise_pct: 0.0,
            save_grids: None,
            load_grids: None,
            schedule: OptimSchedule::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config fields are all representable in TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.levels == 0 || self.levels > 12 {
            return fail(format!("levels must be in 1..=12, got {}", self.levels));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.w_isometry >= 0.0 && self.w_isometry.is_finite()) {
            return fail(format!("w_isometry must be non-negative, got {}", self.w_isometry));
        }
        if self.epochs == Some(0) {
            return fail("epochs must be positive".into());
        }
        if !(self.noise_pct >= 0.0 && self.noise_pct.is_finite()) {
            return fail(format!("noise_pct must be non-negative, got {}", self.noise_pct));
        }
        if self.metrics.samples == 0 {
            return fail("metrics.samples must be positive".into());
        }
        if !self.input.frames.is_empty() && self.input.glob.is_some() {
            return fail("give either input.frames or input.glob, not both".into());
        }
        self.schedule.validate()
    }

    pub fn layout(&self) -> GridLayout {
        GridLayout {
            level_count: self.levels,
            multires: self.multires,
        }
    }

    pub fn epochs_for(&self, frames: usize) -> usize {
        self.epochs.unwrap_or_else(|| default_epochs(frames))
    }

    pub fn objective(&self, frames: usize) -> ObjectiveConfig {
        ObjectiveConfig {
            chamfer: RobustChamferParams { alpha: self.alpha },
            w_isometry: self.w_isometry,
            isometry: self.isometry,
            max_epochs: self.epochs_for(frames),
        }
    }

    /// Optimizer settings with the ablation rule applied: without grid
    /// smoothing the grid learning rate drops to a tenth. The mesh keeps
    /// its own smoothing either way.
    pub fn optimizer(&self) -> OptimizerSettings {
        let mut schedule = self.schedule;
        if !self.precondition {
            schedule.base_lr *= UNPRECONDITIONED_LR_FACTOR;
        }
        OptimizerSettings {
            schedule,
            order: self.precondition_order,
            smooth_grids: self.precondition,
            smooth_mesh: true,
            optimize_mesh: self.optimize_mesh,
        }
    }
}
