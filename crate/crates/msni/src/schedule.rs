//! Stage schedules: when the streaming estimator performs Newton updates.
//!
//! A schedule is a strictly increasing exponent list
//! `0 < alpha_0 < alpha_1 < ... < alpha_T = 1` over a stream of `K` batches.
//! The initial window holds `floor(K^alpha_0)` batches in full; Newton updates
//! fire when the batch count reaches each boundary `b_t = floor(K^alpha_t)`.
//! The final exponent must be exactly 1 so the last update consumes all `K`
//! batches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Validated stage schedule with precomputed boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    total_batches: usize,
    alpha0: f64,
    alphas: Vec<f64>,
    initial_window: usize,
    boundaries: Vec<usize>,
}

/// `floor(K^alpha)` computed as `exp(alpha * ln K)` with a `1e-9` upward nudge
/// before flooring, so values sitting just below an integer do not drift
/// across platforms. `alpha = 1` maps to `K` exactly.
pub fn floor_power(k: usize, alpha: f64) -> usize {
    if alpha == 1.0 {
        return k;
    }
    let v = (alpha * (k as f64).ln()).exp() + 1e-9;
    v.floor() as usize
}

impl StageSchedule {
    /// Builds and validates a schedule from explicit exponents.
    pub fn build(total_batches: usize, alpha0: f64, alphas: &[f64]) -> Result<Self> {
        if total_batches == 0 {
            return Err(Error::InvalidSchedule("K must be at least 1".into()));
        }
        if !(alpha0 > 0.0 && alpha0 < 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "alpha0 must lie in (0,1), got {alpha0}"
            )));
        }
        if alphas.is_empty() {
            return Err(Error::InvalidSchedule("at least one stage exponent required".into()));
        }
        let mut prev = alpha0;
        for (t, &a) in alphas.iter().enumerate() {
            if !a.is_finite() || a <= prev {
                return Err(Error::InvalidSchedule(format!(
                    "exponents must be strictly increasing: alpha_{} = {a} does not exceed {prev}",
                    t + 1
                )));
            }
            prev = a;
        }
        let last = *alphas.last().unwrap();
        if (last - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSchedule(format!(
                "final exponent must equal 1 so the last update sees all batches, got {last}"
            )));
        }
        let initial_window = floor_power(total_batches, alpha0);
        let boundaries: Vec<usize> =
            alphas.iter().map(|&a| floor_power(total_batches, a)).collect();
        for t in 1..boundaries.len() {
            if boundaries[t] <= boundaries[t - 1] {
                return Err(Error::InvalidSchedule(format!(
                    "boundary collision at stage {}: floor(K^{}) = floor(K^{}) = {}",
                    t + 1,
                    alphas[t],
                    alphas[t - 1],
                    boundaries[t]
                )));
            }
        }
        debug_assert_eq!(*boundaries.last().unwrap(), total_batches);
        Ok(Self {
            total_batches,
            alpha0,
            alphas: alphas.to_vec(),
            initial_window,
            boundaries,
        })
    }

    /// Linear interpolation in exponent space: `alpha_t = alpha0 + t*(1-alpha0)/T`.
    /// Inter-update gaps then grow geometrically in batch count. `T = 1`
    /// reproduces the one-stage schedule.
    pub fn default_spacing(total_batches: usize, stages: usize, alpha0: f64) -> Result<Self> {
        if stages == 0 {
            return Err(Error::InvalidSchedule("T must be at least 1".into()));
        }
        let alphas: Vec<f64> = (1..=stages)
            .map(|t| alpha0 + t as f64 * (1.0 - alpha0) / stages as f64)
            .collect();
        Self::build(total_batches, alpha0, &alphas)
    }

    pub fn total_batches(&self) -> usize {
        self.total_batches
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// Number of Newton-update stages `T`.
    pub fn stages(&self) -> usize {
        self.alphas.len()
    }

    /// `b_0`: how many batches are stored for the initial estimate.
    pub fn initial_window(&self) -> usize {
        self.initial_window
    }

    /// Update boundaries `b_1 < b_2 < ... < b_T = K`.
    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// Finite-sample proxies for the asymptotic rate conditions. These are
    /// `o(1)` statements, so violations warn rather than abort; `threshold`
    /// defaults to 0.5 via [`ConditionReport::DEFAULT_THRESHOLD`].
    pub fn validate_rate_conditions(&self, p: usize, threshold: f64) -> ConditionReport {
        let pf = p as f64;
        let b0 = self.initial_window as f64;
        let initial_ratio = pf / b0;
        let mut stage_ratios = Vec::with_capacity(self.boundaries.len());
        let mut prev = b0;
        for &b in &self.boundaries {
            stage_ratios.push(pf * b as f64 / (prev * prev));
            prev = b as f64;
        }
        let b_last = if self.boundaries.len() >= 2 {
            self.boundaries[self.boundaries.len() - 2] as f64
        } else {
            b0
        };
        let normality_ratio = pf * pf * self.total_batches as f64 / (b_last * b_last);
        ConditionReport { threshold, initial_ratio, stage_ratios, normality_ratio }
    }
}

/// Rate-condition proxies, each compared against a warn threshold.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub threshold: f64,
    /// `p / b_0`
    pub initial_ratio: f64,
    /// `p * b_t / b_{t-1}^2` for each stage
    pub stage_ratios: Vec<f64>,
    /// `p^2 * K / b_{T-1}^2`
    pub normality_ratio: f64,
}

impl ConditionReport {
    pub const DEFAULT_THRESHOLD: f64 = 0.5;

    pub fn initial_ok(&self) -> bool {
        self.initial_ratio <= self.threshold
    }

    pub fn max_stage_ratio(&self) -> f64 {
        self.stage_ratios.iter().cloned().fold(0.0, f64::max)
    }

    pub fn stages_ok(&self) -> bool {
        self.max_stage_ratio() <= self.threshold
    }

    pub fn normality_ok(&self) -> bool {
        self.normality_ratio <= self.threshold
    }

    pub fn all_pass(&self) -> bool {
        self.initial_ok() && self.stages_ok() && self.normality_ok()
    }

    /// Human-readable warnings for proxies above the threshold.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.initial_ok() {
            out.push(format!(
                "initial-window ratio p/b0 = {:.3} exceeds {:.2}",
                self.initial_ratio, self.threshold
            ));
        }
        for (t, r) in self.stage_ratios.iter().enumerate() {
            if *r > self.threshold {
                out.push(format!(
                    "stage {} ratio p*b_t/b_(t-1)^2 = {:.3} exceeds {:.2}",
                    t + 1,
                    r,
                    self.threshold
                ));
            }
        }
        if !self.normality_ok() {
            out.push(format!(
                "normality ratio p^2*K/b_(T-1)^2 = {:.3} exceeds {:.2}",
                self.normality_ratio, self.threshold
            ));
        }
        out
    }
}
