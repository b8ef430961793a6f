//! Multi-stage Newton iteration over a batch stream.
//!
//! The stream is processed in one pass. The first `b_0` batches are stored and
//! pooled into an initial M-estimate, then replayed through the accumulator
//! with gradients and Hessians evaluated at that initial estimate, after which
//! the storage is dropped. Every later batch is evaluated once, at the stage
//! estimate current on arrival, and never retained. When the batch count
//! reaches a schedule boundary `b_t` the estimate takes one undamped Newton
//! step using the accumulated means:
//!
//! ```text
//! theta_t = theta_{t-1} - (hess_sum / b_t)^{-1} (grad_sum / b_t)
//! ```
//!
//! The accumulator is never reset: sums keep growing across stages, so older
//! batches keep contributing through the (stale) estimates they were
//! evaluated at. Memory is `O(p^2 + b_0 * n * p)` regardless of the stream
//! length.
//!
//! The one-stage variant (a single update once all batches arrived) is the
//! special case `T = 1` and is exposed as [`osni_run`].

use std::io::Write;

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::linalg::solve_spd_guarded;
use crate::loss::{ModelKind, SampleBatch};
use crate::schedule::StageSchedule;

use super::accumulator::NewtonAccumulator;
use super::newton::{initial_m_estimate, NewtonOptions};

/// One recorded stage estimate.
#[derive(Debug, Clone)]
pub struct HistoryEntry {
    /// Stage index `t`; 0 is the pooled initial estimate.
    pub stage: usize,
    /// Batch count at which the estimate was produced.
    pub batch_index: usize,
    pub theta: Array1<f64>,
}

/// Streaming state once the initial estimate exists.
#[derive(Debug, Clone)]
pub struct MsniState {
    schedule: StageSchedule,
    kind: ModelKind,
    acc: NewtonAccumulator,
    estimate: Array1<f64>,
    stage: usize,
    batches_seen: usize,
    history: Vec<HistoryEntry>,
}

impl MsniState {
    /// Starts streaming from the pooled initial estimate `theta_hat_0`.
    pub fn new(schedule: StageSchedule, kind: ModelKind, initial: Array1<f64>) -> Self {
        let p = initial.len();
        let history = vec![HistoryEntry {
            stage: 0,
            batch_index: schedule.initial_window(),
            theta: initial.clone(),
        }];
        Self {
            schedule,
            kind,
            acc: NewtonAccumulator::new(p),
            estimate: initial,
            stage: 0,
            batches_seen: 0,
            history,
        }
    }

    /// Folds in one batch, evaluated at the current stage estimate, and fires
    /// the stage update if the batch count reached the next boundary. The
    /// batch is not retained.
    pub fn ingest(&mut self, batch: &SampleBatch) -> Result<()> {
        if self.batches_seen >= self.schedule.total_batches() {
            return Err(Error::InvalidInput(format!(
                "stream delivered more than the scheduled {} batches",
                self.schedule.total_batches()
            )));
        }
        if batch.batch_index() != self.batches_seen + 1 {
            return Err(Error::InvalidInput(format!(
                "out-of-order batch: expected index {}, got {}",
                self.batches_seen + 1,
                batch.batch_index()
            )));
        }
        self.acc.accumulate(batch, self.kind, self.estimate.view())?;
        self.batches_seen += 1;
        if self.stage < self.schedule.stages()
            && self.batches_seen == self.schedule.boundaries()[self.stage]
        {
            self.stage_update()?;
        }
        Ok(())
    }

    /// One undamped Newton step from the accumulated means.
    fn stage_update(&mut self) -> Result<()> {
        debug_assert_eq!(self.acc.count(), self.batches_seen);
        let mean_h = self.acc.mean_hessian();
        let mean_g = self.acc.mean_gradient();
        let step = solve_spd_guarded(mean_h.view(), mean_g.view())?;
        self.estimate -= &step;
        if self.estimate.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonConvergence {
                iterations: self.stage + 1,
                grad_norm: crate::linalg::norm(mean_g.view()),
                reason: "stage update produced non-finite estimate".into(),
                last_iterate: self.estimate.to_vec(),
            });
        }
        self.stage += 1;
        self.history.push(HistoryEntry {
            stage: self.stage,
            batch_index: self.batches_seen,
            theta: self.estimate.clone(),
        });
        Ok(())
    }

    pub fn estimate(&self) -> &Array1<f64> {
        &self.estimate
    }

    /// Completed Newton updates.
    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn batches_seen(&self) -> usize {
        self.batches_seen
    }

    pub fn schedule(&self) -> &StageSchedule {
        &self.schedule
    }

    pub fn accumulator(&self) -> &NewtonAccumulator {
        &self.acc
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    /// Writes the stage-estimate history as CSV with columns
    /// `stage,batch_index,theta_1..theta_p`.
    pub fn write_history_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let p = self.estimate.len();
        write!(out, "stage,batch_index")?;
        for j in 1..=p {
            write!(out, ",theta_{j}")?;
        }
        writeln!(out)?;
        for entry in &self.history {
            write!(out, "{},{}", entry.stage, entry.batch_index)?;
            for v in entry.theta.iter() {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

enum Phase {
    Warmup(Vec<SampleBatch>),
    Active(Box<MsniState>),
}

/// Drives the full run: stores the initial window, solves the pooled initial
/// estimate, replays the window, then streams the rest.
pub struct MsniRunner {
    schedule: StageSchedule,
    kind: ModelKind,
    opts: NewtonOptions,
    phase: Phase,
}

impl MsniRunner {
    pub fn new(schedule: StageSchedule, kind: ModelKind) -> Self {
        Self::with_options(schedule, kind, NewtonOptions::default())
    }

    pub fn with_options(schedule: StageSchedule, kind: ModelKind, opts: NewtonOptions) -> Self {
        let window = schedule.initial_window();
        Self { schedule, kind, opts, phase: Phase::Warmup(Vec::with_capacity(window)) }
    }

    pub fn ingest(&mut self, batch: &SampleBatch) -> Result<()> {
        match &mut self.phase {
            Phase::Warmup(stored) => {
                stored.push(batch.clone());
                if stored.len() == self.schedule.initial_window() {
                    let initial = initial_m_estimate(stored, self.kind, &self.opts)?;
                    let mut state = MsniState::new(self.schedule.clone(), self.kind, initial);
                    for b in stored.drain(..) {
                        state.ingest(&b)?;
                    }
                    self.phase = Phase::Active(Box::new(state));
                }
                Ok(())
            }
            Phase::Active(state) => state.ingest(batch),
        }
    }

    /// Current stage estimate; `None` until the initial window completes.
    pub fn estimate(&self) -> Option<&Array1<f64>> {
        match &self.phase {
            Phase::Warmup(_) => None,
            Phase::Active(state) => Some(state.estimate()),
        }
    }

    pub fn state(&self) -> Option<&MsniState> {
        match &self.phase {
            Phase::Warmup(_) => None,
            Phase::Active(state) => Some(state),
        }
    }

    pub fn into_state(self) -> Option<MsniState> {
        match self.phase {
            Phase::Warmup(_) => None,
            Phase::Active(state) => Some(*state),
        }
    }
}

/// Runs the multi-stage estimator over a stream of exactly `K` batches.
pub fn msni_run<I>(
    stream: I,
    schedule: &StageSchedule,
    kind: ModelKind,
) -> Result<(Array1<f64>, MsniState)>
where
    I: IntoIterator<Item = SampleBatch>,
{
    msni_run_with_options(stream, schedule, kind, NewtonOptions::default())
}

pub fn msni_run_with_options<I>(
    stream: I,
    schedule: &StageSchedule,
    kind: ModelKind,
    opts: NewtonOptions,
) -> Result<(Array1<f64>, MsniState)>
where
    I: IntoIterator<Item = SampleBatch>,
{
    let mut runner = MsniRunner::with_options(schedule.clone(), kind, opts);
    let mut seen = 0usize;
    for batch in stream {
        runner.ingest(&batch)?;
        seen += 1;
    }
    if seen != schedule.total_batches() {
        return Err(Error::InvalidInput(format!(
            "stream ended after {seen} of {} scheduled batches",
            schedule.total_batches()
        )));
    }
    let state = runner
        .into_state()
        .expect("initial window completed because seen == K >= b_0");
    Ok((state.estimate().clone(), state))
}

/// One-stage variant: pooled initial estimate from `floor(K^alpha0)` batches,
/// then a single Newton update after all `K` batches.
pub fn osni_run<I>(
    stream: I,
    total_batches: usize,
    alpha0: f64,
    kind: ModelKind,
) -> Result<(Array1<f64>, MsniState)>
where
    I: IntoIterator<Item = SampleBatch>,
{
    let schedule = StageSchedule::build(total_batches, alpha0, &[1.0])?;
    msni_run(stream, &schedule, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    /// 1-D quadratic losses (theta - a)^2 / 2 expressed as linear batches
    /// with a single unit covariate.
    fn scalar_batch(a: f64, idx: usize) -> SampleBatch {
        SampleBatch::new(Array2::from_elem((1, 1), 1.0), array![a], idx).unwrap()
    }

    #[test]
    fn hand_computed_stage_updates() {
        // targets 1,2,3,4 with window 2 and boundaries (2, 4)
        let schedule = StageSchedule::build(4, 0.5, &[0.5849625007211562, 1.0]).unwrap();
        assert_eq!(schedule.initial_window(), 2);
        assert_eq!(schedule.boundaries(), &[2, 4]);

        let stream: Vec<SampleBatch> =
            [1.0, 2.0, 3.0, 4.0].iter().enumerate().map(|(i, &a)| scalar_batch(a, i + 1)).collect();
        let (theta, state) = msni_run(stream, &schedule, ModelKind::Linear).unwrap();

        // initial estimate: mean of (1,2) = 1.5; stage 1 gradient sum is zero,
        // estimate stays 1.5; stage 2 adds gradients (-1.5, -2.5) at 1.5 and
        // the update lands on the pooled mean 2.5
        let hist = state.history();
        assert_eq!(hist.len(), 3);
        assert!((hist[0].theta[0] - 1.5).abs() < 1e-12);
        assert!((hist[1].theta[0] - 1.5).abs() < 1e-12);
        assert!((theta[0] - 2.5).abs() < 1e-12);
        assert_eq!(state.stage(), 2);
        assert_eq!(state.batches_seen(), 4);
    }

    #[test]
    fn zero_gradients_leave_estimate_fixed() {
        // all batches share target 3 => gradients at 3 are zero after init
        let schedule = StageSchedule::build(4, 0.5, &[1.0]).unwrap();
        let stream: Vec<SampleBatch> = (1..=4).map(|i| scalar_batch(3.0, i)).collect();
        let (theta, _) = msni_run(stream, &schedule, ModelKind::Linear).unwrap();
        assert!((theta[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn identity_hessian_step_is_negative_gradient() {
        let mut state = MsniState::new(
            StageSchedule::build(2, 0.5, &[1.0]).unwrap(),
            ModelKind::Linear,
            array![0.0],
        );
        // unit covariate, target 1: at estimate 0 gradient is -1, hessian 1
        state.ingest(&scalar_batch(1.0, 1)).unwrap();
        state.ingest(&scalar_batch(1.0, 2)).unwrap();
        assert!((state.estimate()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_batch_stream_recovers_batch_estimate() {
        let schedule = StageSchedule::build(1, 0.5, &[1.0]).unwrap();
        assert_eq!(schedule.initial_window(), 1);
        let stream = vec![scalar_batch(7.25, 1)];
        let (theta, state) = msni_run(stream, &schedule, ModelKind::Linear).unwrap();
        assert!((theta[0] - 7.25).abs() < 1e-12);
        assert_eq!(state.stage(), 1);
    }

    #[test]
    fn out_of_order_batches_rejected() {
        let mut state = MsniState::new(
            StageSchedule::build(3, 0.5, &[1.0]).unwrap(),
            ModelKind::Linear,
            array![0.0],
        );
        assert!(state.ingest(&scalar_batch(1.0, 2)).is_err());
    }

    #[test]
    fn overlong_stream_rejected() {
        let schedule = StageSchedule::build(2, 0.5, &[1.0]).unwrap();
        let stream: Vec<SampleBatch> = (1..=3).map(|i| scalar_batch(1.0, i)).collect();
        assert!(msni_run(stream, &schedule, ModelKind::Linear).is_err());
    }

    #[test]
    fn short_stream_rejected() {
        let schedule = StageSchedule::build(5, 0.5, &[1.0]).unwrap();
        let stream: Vec<SampleBatch> = (1..=3).map(|i| scalar_batch(1.0, i)).collect();
        assert!(msni_run(stream, &schedule, ModelKind::Linear).is_err());
    }

    #[test]
    fn history_csv_schema() {
        let schedule = StageSchedule::build(4, 0.5, &[1.0]).unwrap();
        let stream: Vec<SampleBatch> = (1..=4).map(|i| scalar_batch(i as f64, i)).collect();
        let (_, state) = msni_run(stream, &schedule, ModelKind::Linear).unwrap();
        let mut buf = Vec::new();
        state.write_history_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "stage,batch_index,theta_1");
        assert!(lines.next().unwrap().starts_with("0,2,"));
        assert!(lines.next().unwrap().starts_with("1,4,"));
    }
}
