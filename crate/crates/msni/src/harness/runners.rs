//! Uniform streaming drivers for the estimator zoo.
//!
//! The harness feeds every selected estimator the same batches in the same
//! order and asks for the current estimate at evaluation points. Estimators
//! that have no estimate yet (the multi-stage runner during its initial
//! window, an all-skipped WLSE) report `None`.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::estimators::{
    solve_newton_replay, MsniRunner, NewtonOptions, RbclState, SequentialMle, WlseState,
};
use crate::loss::{loss_gradient, loss_hessian, ModelKind, SampleBatch};
use crate::linalg::solve_spd_guarded;
use crate::schedule::StageSchedule;
use crate::stream::BatchSource;

use super::config::EstimatorKind;

pub(crate) trait Streamer {
    fn label(&self) -> String;
    /// Called at task boundaries (before the task's first batch).
    fn task_start(&mut self) {}
    fn ingest(&mut self, batch: &SampleBatch) -> Result<()>;
    fn estimate(&mut self) -> Option<Array1<f64>>;
}

pub(crate) struct MsniStreamer {
    runner: MsniRunner,
    label: &'static str,
}

impl MsniStreamer {
    pub fn new(
        schedule: StageSchedule,
        kind: ModelKind,
        label: &'static str,
        opts: NewtonOptions,
    ) -> Self {
        Self { runner: MsniRunner::with_options(schedule, kind, opts), label }
    }
}

impl Streamer for MsniStreamer {
    fn label(&self) -> String {
        self.label.into()
    }

    fn ingest(&mut self, batch: &SampleBatch) -> Result<()> {
        self.runner.ingest(batch)
    }

    fn estimate(&mut self) -> Option<Array1<f64>> {
        self.runner.estimate().cloned()
    }
}

pub(crate) struct WlseStreamer(pub WlseState);

impl Streamer for WlseStreamer {
    fn label(&self) -> String {
        "wlse".into()
    }

    fn ingest(&mut self, batch: &SampleBatch) -> Result<()> {
        self.0.ingest(batch)
    }

    fn estimate(&mut self) -> Option<Array1<f64>> {
        self.0.finalize().ok()
    }
}

pub(crate) struct RbclStreamer(pub RbclState);

impl Streamer for RbclStreamer {
    fn label(&self) -> String {
        format!("rbcl_{}", self.0.step())
    }

    fn ingest(&mut self, batch: &SampleBatch) -> Result<()> {
        self.0.ingest(batch)
    }

    fn estimate(&mut self) -> Option<Array1<f64>> {
        self.0.estimate().cloned()
    }
}

pub(crate) struct MleStreamer(pub SequentialMle);

impl Streamer for MleStreamer {
    fn label(&self) -> String {
        "mle_sequential".into()
    }

    fn task_start(&mut self) {
        self.0.start_task();
    }

    fn ingest(&mut self, batch: &SampleBatch) -> Result<()> {
        self.0.ingest(batch)
    }

    fn estimate(&mut self) -> Option<Array1<f64>> {
        // a failed refit (separable task fragment) keeps the last estimate
        let _ = self.0.refresh();
        self.0.estimate().cloned()
    }
}

/// Pooled full-data comparator. Linear streams keep closed-form normal
/// equations incrementally; logistic streams refit by replaying the source
/// (warm-started), so asking for the estimate at every batch is quadratic in
/// the stream length.
pub(crate) enum OracleStreamer<'a, S: BatchSource> {
    Linear {
        hess_sum: Array2<f64>,
        rhs_sum: Array1<f64>,
        count: usize,
    },
    Logistic {
        source: &'a S,
        seen: usize,
        warm: Option<Array1<f64>>,
        cache: Option<Array1<f64>>,
        opts: NewtonOptions,
    },
}

impl<'a, S: BatchSource> OracleStreamer<'a, S> {
    pub fn new(source: &'a S, kind: ModelKind, opts: NewtonOptions) -> Self {
        let p = source.dim();
        match kind {
            ModelKind::Linear => OracleStreamer::Linear {
                hess_sum: Array2::zeros((p, p)),
                rhs_sum: Array1::zeros(p),
                count: 0,
            },
            ModelKind::Logistic => OracleStreamer::Logistic { source, seen: 0, warm: None, cache: None, opts },
        }
    }
}

impl<S: BatchSource> Streamer for OracleStreamer<'_, S> {
    fn label(&self) -> String {
        "oracle".into()
    }

    fn ingest(&mut self, batch: &SampleBatch) -> Result<()> {
        match self {
            OracleStreamer::Linear { hess_sum, rhs_sum, count } => {
                let zero = Array1::<f64>::zeros(batch.dim());
                *hess_sum += &loss_hessian(batch, ModelKind::Linear, zero.view())?;
                // gradient at zero is -X'y/n
                *rhs_sum -= &loss_gradient(batch, ModelKind::Linear, zero.view())?;
                *count += 1;
                Ok(())
            }
            OracleStreamer::Logistic { seen, cache, .. } => {
                *seen += 1;
                *cache = None;
                Ok(())
            }
        }
    }

    fn estimate(&mut self) -> Option<Array1<f64>> {
        match self {
            OracleStreamer::Linear { hess_sum, rhs_sum, count } => {
                if *count == 0 {
                    return None;
                }
                solve_spd_guarded(hess_sum.view(), rhs_sum.view()).ok()
            }
            OracleStreamer::Logistic { source, seen, warm, cache, opts } => {
                if *seen == 0 {
                    return None;
                }
                if cache.is_none() {
                    let p = source.dim();
                    let init = warm.clone().unwrap_or_else(|| Array1::zeros(p));
                    let fit =
                        solve_newton_replay(*source, *seen, ModelKind::Logistic, init.view(), opts)
                            .ok()?;
                    *warm = Some(fit.clone());
                    *cache = Some(fit);
                }
                cache.clone()
            }
        }
    }
}

/// Builds the streamer set for one replication. RBCL fans out into one
/// streamer per step factor; everything else appears once.
pub(crate) fn build_streamers<'a, S: BatchSource>(
    estimators: &[EstimatorKind],
    schedule: &StageSchedule,
    kind: ModelKind,
    p: usize,
    rbcl_steps: &[f64],
    source: &'a S,
    opts: NewtonOptions,
) -> Result<Vec<Box<dyn Streamer + 'a>>> {
    let total = schedule.total_batches();
    let mut out: Vec<Box<dyn Streamer + 'a>> = Vec::new();
    for est in estimators {
        match est {
            EstimatorKind::Msni => {
                out.push(Box::new(MsniStreamer::new(schedule.clone(), kind, "msni", opts)));
            }
            EstimatorKind::Osni => {
                let osni_schedule = StageSchedule::build(total, schedule.alpha0(), &[1.0])?;
                out.push(Box::new(MsniStreamer::new(osni_schedule, kind, "osni", opts)));
            }
            EstimatorKind::Wlse => {
                out.push(Box::new(WlseStreamer(WlseState::with_options(p, kind, opts))))
            }
            EstimatorKind::Rbcl => {
                for &step in rbcl_steps {
                    out.push(Box::new(RbclStreamer(RbclState::with_options(p, kind, step, opts))));
                }
            }
            EstimatorKind::MleSequential => {
                out.push(Box::new(MleStreamer(SequentialMle::with_options(p, kind, opts))));
            }
            EstimatorKind::Oracle => out.push(Box::new(OracleStreamer::new(source, kind, opts))),
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no estimators selected".into()));
    }
    Ok(out)
}
