//! Estimation algorithms over batch streams.
//!
//! Streaming estimators (multi-stage and one-stage Newton, the weighted
//! least-squares combiner, the regularized continual-learning update and the
//! sequential-MLE forgetting baseline) consume each batch once. The pooled
//! oracle is the desk-scale comparator that refits on everything.

mod accumulator;
mod msni;
mod newton;
mod rbcl;
mod sequential;
mod wlse;

pub use accumulator::NewtonAccumulator;
pub use msni::{msni_run, msni_run_with_options, osni_run, HistoryEntry, MsniRunner, MsniState};
pub use newton::{initial_m_estimate, solve_newton, solve_newton_replay, NewtonOptions};
pub use rbcl::{rbcl_update, RbclState};
pub use sequential::SequentialMle;
pub use wlse::WlseState;

use ndarray::Array1;

use crate::error::Result;
use crate::loss::{ModelKind, SampleBatch};
use crate::stream::BatchSource;

/// Full-data pooled M-estimate: minimizes the mean of all batch-mean losses.
/// Replays the whole stream each Newton sweep; this is the evaluation-side
/// comparator, not a streaming algorithm.
pub fn pooled_oracle<S: BatchSource>(
    source: &S,
    kind: ModelKind,
    opts: &NewtonOptions,
) -> Result<Array1<f64>> {
    let p = source.dim();
    solve_newton_replay(source, source.len(), kind, Array1::<f64>::zeros(p).view(), opts)
}

/// Pooled M-estimate over batches already in memory.
pub fn pooled_oracle_batches(
    batches: &[SampleBatch],
    kind: ModelKind,
    opts: &NewtonOptions,
) -> Result<Array1<f64>> {
    let p = batches
        .first()
        .ok_or_else(|| crate::error::Error::InvalidInput("no batches".into()))?
        .dim();
    solve_newton(batches, kind, Array1::<f64>::zeros(p).view(), opts)
}
