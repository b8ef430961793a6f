//! Plug-in sandwich variance and confidence intervals.
//!
//! The asymptotic variance of a projection `v' theta_hat` has sandwich form
//! `v' Sigma^{-1} G Sigma^{-1} v / scale`, where `Sigma` is the expected
//! Hessian and `G` the score covariance. Both are estimated by plugging the
//! final estimate into a replay of the stream:
//!
//! - `Sigma_hat`: mean of the per-batch Hessians;
//! - heterogeneous mode: `G_hat` is the mean outer product of *batch-mean*
//!   gradients (one term per batch), and the scale is `K` — batch-level
//!   parameter noise dominates;
//! - homogeneous mode: `G_hat` is the mean outer product of *per-sample*
//!   scores and the scale is the total sample count — no parameter noise,
//!   so every observation counts.
//!
//! Replay regenerates batches from their seeds (or re-reads them from
//! memory); the streaming estimators themselves never see data twice.

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimators::{msni_run_with_options, NewtonOptions};
use crate::linalg::{invert_spd_guarded, quad_form};
use crate::loss::{loss_gradient, loss_hessian, score_outer_mean, ModelKind};
use crate::schedule::StageSchedule;
use crate::sim::{base_parameter, SimConfig, SimStream};
use crate::stream::BatchSource;

/// Which asymptotic regime the variance targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceMode {
    /// Parameters vary across batches; variance scales with `1/K`.
    Heterogeneous,
    /// One shared parameter; variance scales with `1/(K*n)`.
    Homogeneous,
}

/// Plug-in sandwich components.
#[derive(Debug, Clone)]
pub struct SandwichEstimate {
    /// Mean per-batch Hessian at the final estimate.
    pub sigma_hat: Array2<f64>,
    /// Score covariance estimate (see module docs for the two modes).
    pub score_cov: Array2<f64>,
    pub mode: VarianceMode,
    /// `K` in heterogeneous mode, total samples in homogeneous mode.
    pub effective_scale: f64,
}

impl SandwichEstimate {
    /// `v' Sigma^{-1} G Sigma^{-1} v / scale`. Nonnegative because the score
    /// covariance is a mean of outer products.
    pub fn projected_variance(&self, v: ArrayView1<'_, f64>) -> Result<f64> {
        if v.len() != self.sigma_hat.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.sigma_hat.nrows(),
                found: v.len(),
                context: "projection direction",
            });
        }
        let sigma_inv = invert_spd_guarded(self.sigma_hat.view())?;
        let w = sigma_inv.dot(&v);
        Ok(quad_form(self.score_cov.view(), w.view()) / self.effective_scale)
    }
}

/// Two-sided interval for `v' theta`.
#[derive(Debug, Clone)]
pub struct ConfidenceInterval {
    pub center: f64,
    pub half_width: f64,
    pub level: f64,
    pub direction: Array1<f64>,
}

impl ConfidenceInterval {
    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn contains(&self, value: f64) -> bool {
        (value - self.center).abs() <= self.half_width
    }
}

/// Standard-normal quantile `z_{(1+level)/2}`.
pub fn normal_quantile(prob: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(prob)
}

/// Builds the plug-in sandwich estimate by replaying the stream at
/// `theta_hat`.
pub fn sandwich_estimate<S: BatchSource>(
    source: &S,
    theta_hat: ArrayView1<'_, f64>,
    kind: ModelKind,
    mode: VarianceMode,
) -> Result<SandwichEstimate> {
    let k = source.len();
    if k == 0 {
        return Err(Error::InvalidInput("empty stream".into()));
    }
    if theta_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite estimate".into()));
    }
    let p = source.dim();
    let mut sigma = Array2::<f64>::zeros((p, p));
    let mut score = Array2::<f64>::zeros((p, p));
    let mut total_samples = 0usize;
    for idx in 1..=k {
        let batch = source.batch(idx);
        sigma += &loss_hessian(&batch, kind, theta_hat)?;
        total_samples += batch.num_samples();
        match mode {
            VarianceMode::Heterogeneous => {
                let g = loss_gradient(&batch, kind, theta_hat)?;
                // outer product, filled symmetrically
                for i in 0..p {
                    for j in i..p {
                        let v = g[i] * g[j];
                        score[[i, j]] += v;
                        if j != i {
                            score[[j, i]] += v;
                        }
                    }
                }
            }
            VarianceMode::Homogeneous => {
                // weight per-sample outer products by the batch share
                let s = score_outer_mean(&batch, kind, theta_hat)?;
                let w = batch.num_samples() as f64;
                score.scaled_add(w, &s);
            }
        }
    }
    sigma.mapv_inplace(|v| v / k as f64);
    let effective_scale = match mode {
        VarianceMode::Heterogeneous => {
            score.mapv_inplace(|v| v / k as f64);
            k as f64
        }
        VarianceMode::Homogeneous => {
            score.mapv_inplace(|v| v / total_samples as f64);
            total_samples as f64
        }
    };
    Ok(SandwichEstimate { sigma_hat: sigma, score_cov: score, mode, effective_scale })
}

/// Studentized interval for `v' theta` at the given confidence level.
pub fn project_ci(
    est: &SandwichEstimate,
    theta_hat: ArrayView1<'_, f64>,
    v: ArrayView1<'_, f64>,
    level: f64,
) -> Result<ConfidenceInterval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("level must lie in (0,1), got {level}")));
    }
    if v.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidInput("projection direction must be nonzero".into()));
    }
    let variance = est.projected_variance(v)?;
    let z = normal_quantile(0.5 * (1.0 + level));
    Ok(ConfidenceInterval {
        center: v.dot(&theta_hat),
        half_width: z * variance.sqrt(),
        level,
        direction: v.to_owned(),
    })
}

/// One replication's outcome in a coverage experiment.
#[derive(Debug, Clone)]
pub struct CoverageRow {
    pub rep: u32,
    pub covered: bool,
    pub center: f64,
    pub half_width: f64,
    /// `(v'theta_hat - v'theta_0) / se`
    pub standardized: f64,
}

/// Aggregate of a coverage experiment.
#[derive(Debug, Clone)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
    pub failures: usize,
    pub nominal_level: f64,
    pub coverage: f64,
    pub mean_half_width: f64,
    pub stat_mean: f64,
    pub stat_var: f64,
}

/// Runs `reps` independent streams, fits the multi-stage estimator on each,
/// and checks whether the studentized interval for `v' theta_0` covers the
/// truth. Streams are regenerated from their seeds for the variance plug-in;
/// per-replication estimator failures are counted and excluded.
pub fn coverage_experiment(
    cfg: &SimConfig,
    schedule: &StageSchedule,
    v: ArrayView1<'_, f64>,
    level: f64,
    reps: u32,
    mode: VarianceMode,
    opts: NewtonOptions,
) -> Result<CoverageReport> {
    cfg.validate()?;
    if reps < 100 {
        return Err(Error::InvalidInput(format!(
            "coverage experiments need at least 100 replications, got {reps}"
        )));
    }
    if schedule.total_batches() != cfg.k {
        return Err(Error::Config("schedule and stream disagree on K".into()));
    }
    if v.len() != cfg.p {
        return Err(Error::DimensionMismatch {
            expected: cfg.p,
            found: v.len(),
            context: "coverage projection direction",
        });
    }
    let theta0 = base_parameter(cfg.p)?;
    let target = v.dot(&theta0);
    let v_owned = v.to_owned();

    let outcomes: Vec<Result<CoverageRow>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let stream = SimStream::new(cfg.clone(), rep)?;
            let (theta_hat, _) =
                msni_run_with_options(stream.iter_batches(), schedule, cfg.kind, opts)?;
            let sandwich = sandwich_estimate(&stream, theta_hat.view(), cfg.kind, mode)?;
            let se = sandwich.projected_variance(v_owned.view())?.sqrt();
            let z = normal_quantile(0.5 * (1.0 + level));
            let center = v_owned.dot(&theta_hat);
            let half_width = z * se;
            Ok(CoverageRow {
                rep,
                covered: (center - target).abs() <= half_width,
                center,
                half_width,
                standardized: (center - target) / se,
            })
        })
        .collect();

    let mut rows = Vec::with_capacity(reps as usize);
    let mut failures = 0usize;
    for outcome in outcomes {
        match outcome {
            Ok(row) => rows.push(row),
            Err(_) => failures += 1,
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("every replication failed".into()));
    }
    let m = rows.len() as f64;
    let coverage = rows.iter().filter(|r| r.covered).count() as f64 / m;
    let mean_half_width = rows.iter().map(|r| r.half_width).sum::<f64>() / m;
    let stat_mean = rows.iter().map(|r| r.standardized).sum::<f64>() / m;
    let stat_var = if rows.len() > 1 {
        rows.iter()
            .map(|r| (r.standardized - stat_mean).powi(2))
            .sum::<f64>()
            / (m - 1.0)
    } else {
        f64::NAN
    };
    Ok(CoverageReport {
        rows,
        failures,
        nominal_level: level,
        coverage,
        mean_half_width,
        stat_mean,
        stat_var,
    })
}
