//! Experiment configuration: one TOML document with flat sections.
//!
//! ```toml
//! [sim]
//! p = 10
//! k = 500
//! n = 100
//! sigma = 0.05
//! setting = "per_batch"
//! kind = "linear"
//! master_seed = 42
//!
//! [schedule]
//! alpha0 = 0.5
//! stages = 4              # or: alphas = [0.625, 0.75, 0.875, 1.0]
//!
//! [run]
//! estimators = ["msni", "osni", "wlse"]
//! reps = 100
//! output_dir = "out"
//! ```
//!
//! Optional `[coverage]` and `[real_data]` sections configure the other
//! subcommands. The full effective config is echoed into each run's manifest
//! so results stay diffable.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::VarianceMode;
use crate::schedule::StageSchedule;
use crate::sim::SimConfig;

/// Which estimators a run exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Msni,
    Osni,
    Wlse,
    Rbcl,
    MleSequential,
    Oracle,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            EstimatorKind::Msni => "msni",
            EstimatorKind::Osni => "osni",
            EstimatorKind::Wlse => "wlse",
            EstimatorKind::Rbcl => "rbcl",
            EstimatorKind::MleSequential => "mle_sequential",
            EstimatorKind::Oracle => "oracle",
        };
        write!(f, "{name}")
    }
}

/// Schedule section: explicit exponents or a stage count (`stages`, also
/// accepted as `T`) for the default linear-in-exponent spacing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub alpha0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    #[serde(default, alias = "T", skip_serializing_if = "Option::is_none")]
    pub stages: Option<usize>,
}

impl ScheduleSpec {
    pub fn build(&self, total_batches: usize) -> Result<StageSchedule> {
        match (&self.alphas, self.stages) {
            (Some(alphas), None) => StageSchedule::build(total_batches, self.alpha0, alphas),
            (None, Some(t)) => StageSchedule::default_spacing(total_batches, t, self.alpha0),
            (None, None) => StageSchedule::default_spacing(total_batches, 4, self.alpha0),
            (Some(_), Some(_)) => Err(Error::Config(
                "schedule: give either `alphas` or `stages`, not both".into(),
            )),
        }
    }
}

fn default_reps() -> u32 {
    100
}

fn default_output_dir() -> String {
    "out".into()
}

fn default_rbcl_steps() -> Vec<f64> {
    vec![1.0, 0.1, 0.01]
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Msni]
}

/// Replicated-run section.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_reps")]
    pub reps: u32,
    /// Batch indices at which errors are recorded; omitted = every batch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_grid: Option<Vec<usize>>,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default = "default_rbcl_steps")]
    pub rbcl_steps: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            estimators: default_estimators(),
            reps: default_reps(),
            eval_grid: None,
            output_dir: default_output_dir(),
            rbcl_steps: default_rbcl_steps(),
        }
    }
}

/// Newton-solver hyperparameters, applied to every estimator in a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewtonConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Condition proxy above which the ridge guard engages.
    #[serde(default = "default_ridge_cond_limit")]
    pub ridge_cond_limit: f64,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    100
}

fn default_ridge_cond_limit() -> f64 {
    crate::linalg::COND_LIMIT
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
            ridge_cond_limit: default_ridge_cond_limit(),
        }
    }
}

impl NewtonConfig {
    pub fn options(&self) -> crate::estimators::NewtonOptions {
        crate::estimators::NewtonOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            max_halvings: 30,
            ridge_cond_limit: self.ridge_cond_limit,
        }
    }
}

fn default_level() -> f64 {
    0.95
}

fn default_coverage_reps() -> u32 {
    500
}

fn default_mode() -> VarianceMode {
    VarianceMode::Heterogeneous
}

/// Coverage-experiment section.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageConfig {
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_coverage_reps")]
    pub reps: u32,
    /// Projection direction; omitted = first coordinate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
    #[serde(default = "default_mode")]
    pub mode: VarianceMode,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            level: default_level(),
            reps: default_coverage_reps(),
            direction: None,
            mode: default_mode(),
        }
    }
}

/// On-disk feature formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureFormat {
    Csv,
    F32le,
}

impl std::str::FromStr for FeatureFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(FeatureFormat::Csv),
            "f32le" => Ok(FeatureFormat::F32le),
            other => Err(Error::Config(format!("unknown format '{other}' (csv|f32le)"))),
        }
    }
}

fn default_batch_size() -> usize {
    100
}

fn default_test_fraction() -> f64 {
    1.0 / 6.0
}

/// Real-data section: external feature files streamed task by task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RealDataConfig {
    pub path: String,
    #[serde(default = "default_real_format")]
    pub format: FeatureFormat,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Map from class id to `[task, binary_label]`. Omitted = consecutive
    /// class pairs: class `c` goes to task `c/2 + 1` with label `c % 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment: Option<BTreeMap<String, [usize; 2]>>,
}

fn default_real_format() -> FeatureFormat {
    FeatureFormat::Csv
}

/// The whole experiment document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub newton: NewtonConfig,
    #[serde(default)]
    pub coverage: CoverageConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real_data: Option<RealDataConfig>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.schedule.build(self.sim.k)?;
        if self.run.estimators.is_empty() {
            return Err(Error::Config("at least one estimator required".into()));
        }
        if self.run.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if let Some(grid) = &self.run.eval_grid {
            if grid.is_empty() {
                return Err(Error::Config("eval_grid must not be empty when given".into()));
            }
            let sorted = grid.windows(2).all(|w| w[0] < w[1]);
            if !sorted {
                return Err(Error::Config("eval_grid must be strictly increasing".into()));
            }
            if grid[0] < 1 || *grid.last().unwrap() > self.sim.k {
                return Err(Error::Config(format!(
                    "eval_grid entries must lie in 1..={}",
                    self.sim.k
                )));
            }
        }
        if self.run.rbcl_steps.iter().any(|&s| s <= 0.0) {
            return Err(Error::Config("rbcl_steps must be positive".into()));
        }
        if self.newton.tol <= 0.0 || self.newton.max_iter == 0 || self.newton.ridge_cond_limit < 1.0
        {
            return Err(Error::Config(
                "newton: tol must be positive, max_iter at least 1, ridge_cond_limit at least 1"
                    .into(),
            ));
        }
        if self.run.estimators.contains(&EstimatorKind::Rbcl) && self.run.rbcl_steps.is_empty() {
            return Err(Error::Config("rbcl selected but rbcl_steps is empty".into()));
        }
        if !(self.coverage.level > 0.0 && self.coverage.level < 1.0) {
            return Err(Error::Config("coverage level must lie in (0,1)".into()));
        }
        if let Some(dir) = &self.coverage.direction {
            if dir.len() != self.sim.p {
                return Err(Error::Config(format!(
                    "coverage direction has length {}, expected p = {}",
                    dir.len(),
                    self.sim.p
                )));
            }
            if dir.iter().all(|&v| v == 0.0) {
                return Err(Error::Config("coverage direction must be nonzero".into()));
            }
        }
        if let Some(rd) = &self.real_data {
            if rd.batch_size == 0 {
                return Err(Error::Config("real_data batch_size must be positive".into()));
            }
            if !(rd.test_fraction > 0.0 && rd.test_fraction < 1.0) {
                return Err(Error::Config("test_fraction must lie in (0,1)".into()));
            }
        }
        Ok(())
    }
}
