//! Sequential maximum-likelihood baseline: fit only the current task.
//!
//! The classical catastrophic-forgetting reference point. Batches of the
//! active task are retained; a task switch discards them. The pooled fit over
//! the current task's data is computed lazily when the estimate is requested
//! (warm-started from the previous fit), so early fragments of a task — which
//! may be separable under the logistic model — are never fit unless asked
//! for. In a per-batch stream every batch is its own task, reducing this to
//! the per-batch M-estimate.

use ndarray::Array1;

use crate::error::Result;
use crate::loss::{ModelKind, SampleBatch};

use super::newton::{solve_newton, NewtonOptions};

#[derive(Debug, Clone)]
pub struct SequentialMle {
    kind: ModelKind,
    opts: NewtonOptions,
    dim: usize,
    current: Vec<SampleBatch>,
    estimate: Option<Array1<f64>>,
    stale: bool,
}

impl SequentialMle {
    pub fn new(p: usize, kind: ModelKind) -> Self {
        Self::with_options(p, kind, NewtonOptions::default())
    }

    pub fn with_options(p: usize, kind: ModelKind, opts: NewtonOptions) -> Self {
        Self {
            kind,
            opts,
            dim: p,
            current: Vec::new(),
            estimate: None,
            stale: false,
        }
    }

    /// Drops the previous task's data. The last estimate survives until the
    /// new task produces one.
    pub fn start_task(&mut self) {
        self.current.clear();
        self.stale = false;
    }

    pub fn ingest(&mut self, batch: &SampleBatch) -> Result<()> {
        self.current.push(batch.clone());
        self.stale = true;
        Ok(())
    }

    /// Refits on the current task's data if batches arrived since the last
    /// fit. On failure the previous estimate is kept and the error surfaces.
    pub fn refresh(&mut self) -> Result<()> {
        if !self.stale || self.current.is_empty() {
            return Ok(());
        }
        let init = self
            .estimate
            .clone()
            .unwrap_or_else(|| Array1::zeros(self.dim));
        let fit = solve_newton(&self.current, self.kind, init.view(), &self.opts)?;
        self.estimate = Some(fit);
        self.stale = false;
        Ok(())
    }

    /// Last successful fit; call [`SequentialMle::refresh`] first to bring it
    /// up to date with the current task.
    pub fn estimate(&self) -> Option<&Array1<f64>> {
        self.estimate.as_ref()
    }
}
