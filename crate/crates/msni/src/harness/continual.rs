//! Task-sequential training and accuracy-matrix evaluation.
//!
//! Tasks arrive in order; each task's training batches stream through every
//! selected estimator, and after each task the current estimate is scored on
//! every task's held-out split, filling one row of the accuracy grid. Row 0
//! comes from a randomly initialized classifier (`theta ~ N(0, I/p)`, its own
//! substream), which also stands in for estimators that have not produced an
//! estimate yet.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::loss::{ModelKind, SampleBatch};
use crate::metrics::{classify_accuracy, AccuracyMatrix};
use crate::rng::{substream, StreamPurpose};
use crate::sim::{gen_covariates, gen_responses, SimConfig, SimStream, Setting};
use crate::stream::{BatchSource, MemorySource};

use super::config::{EstimatorKind, ScheduleSpec};
use super::runners::build_streamers;

/// One task: ordered training batches plus a held-out evaluation batch.
pub struct TaskData {
    pub train: Vec<SampleBatch>,
    pub test: SampleBatch,
}

/// Accuracy grid of one estimator configuration.
pub struct ContinualOutcome {
    pub estimator: EstimatorKind,
    /// Step factor (meaningful for the regularized baseline; 1 otherwise).
    pub step: f64,
    pub matrix: AccuracyMatrix,
}

/// Streams the task sequence through each estimator and fills the accuracy
/// grids. Training batches must carry consecutive global indices starting
/// at 1.
#[allow(clippy::too_many_arguments)]
pub fn run_continual(
    tasks: &[TaskData],
    estimators: &[EstimatorKind],
    schedule_spec: &ScheduleSpec,
    rbcl_steps: &[f64],
    opts: crate::estimators::NewtonOptions,
    master_seed: u64,
    rep: u32,
) -> Result<Vec<ContinualOutcome>> {
    if tasks.is_empty() {
        return Err(Error::InvalidInput("no tasks".into()));
    }
    let m = tasks.len();
    let p = tasks[0]
        .train
        .first()
        .ok_or_else(|| Error::InvalidInput("task 1 has no training batches".into()))?
        .dim();
    let total: usize = tasks.iter().map(|t| t.train.len()).sum();
    let schedule = schedule_spec.build(total)?;

    // all training batches in memory back the pooled comparator when selected
    let all_train: Vec<SampleBatch> = tasks.iter().flat_map(|t| t.train.iter().cloned()).collect();
    let source = MemorySource::new(all_train);

    let mut init_rng = substream(master_seed, StreamPurpose::InitClassifier, rep, 0);
    let scale = 1.0 / (p as f64).sqrt();
    let theta_rand =
        Array1::from_shape_fn(p, |_| scale * init_rng.sample::<f64, _>(StandardNormal));

    let mut row0 = vec![0.0; m];
    for (j, task) in tasks.iter().enumerate() {
        row0[j] = classify_accuracy(theta_rand.view(), &task.test)?;
    }

    let kind = ModelKind::Logistic;
    let mut streamers = build_streamers(estimators, &schedule, kind, p, rbcl_steps, &source, opts)?;
    let mut grids: Vec<Array2<f64>> = streamers
        .iter()
        .map(|_| {
            let mut g = Array2::<f64>::zeros((m + 1, m));
            for j in 0..m {
                g[[0, j]] = row0[j];
            }
            g
        })
        .collect();

    let mut expected_index = 0usize;
    for (ti, task) in tasks.iter().enumerate() {
        for streamer in streamers.iter_mut() {
            streamer.task_start();
        }
        for batch in &task.train {
            expected_index += 1;
            if batch.batch_index() != expected_index {
                return Err(Error::InvalidInput(format!(
                    "training batches must be numbered consecutively: expected {expected_index}, got {}",
                    batch.batch_index()
                )));
            }
            for streamer in streamers.iter_mut() {
                streamer.ingest(batch)?;
            }
        }
        for (streamer, grid) in streamers.iter_mut().zip(grids.iter_mut()) {
            let theta = streamer.estimate().unwrap_or_else(|| theta_rand.clone());
            for (j, other) in tasks.iter().enumerate() {
                grid[[ti + 1, j]] = classify_accuracy(theta.view(), &other.test)?;
            }
        }
    }

    let mut outcomes = Vec::with_capacity(streamers.len());
    let mut grid_iter = grids.into_iter();
    for est in estimators {
        match est {
            EstimatorKind::Rbcl => {
                for &step in rbcl_steps {
                    let matrix = AccuracyMatrix::new(grid_iter.next().unwrap())?;
                    outcomes.push(ContinualOutcome { estimator: *est, step, matrix });
                }
            }
            _ => {
                let matrix = AccuracyMatrix::new(grid_iter.next().unwrap())?;
                outcomes.push(ContinualOutcome { estimator: *est, step: 1.0, matrix });
            }
        }
    }
    Ok(outcomes)
}

/// Builds a synthetic task sequence from a per-task stream configuration,
/// with fresh held-out draws per task from dedicated substreams.
pub fn synthetic_tasks(cfg: &SimConfig, test_per_task: usize, rep: u32) -> Result<Vec<TaskData>> {
    if cfg.setting != Setting::PerTask {
        return Err(Error::Config("synthetic tasks need the per_task setting".into()));
    }
    if test_per_task == 0 {
        return Err(Error::Config("test_per_task must be positive".into()));
    }
    let stream = SimStream::new(cfg.clone(), rep)?;
    let per_task = cfg.batches_per_task();
    let task_params = stream
        .params()
        .task_params()
        .expect("per-task stream carries task parameters")
        .to_vec();
    let mut tasks = Vec::with_capacity(cfg.num_tasks);
    for (j, theta) in task_params.iter().enumerate() {
        let first = j * per_task + 1;
        let train: Vec<SampleBatch> = (first..first + per_task).map(|k| stream.batch(k)).collect();
        let mut rng = substream(cfg.master_seed, StreamPurpose::TestData, rep, (j + 1) as u64);
        let x = gen_covariates(test_per_task, cfg.p, &mut rng);
        let y = gen_responses(&x, theta.view(), cfg.kind, &mut rng)?;
        let test = SampleBatch::new(x, y, j + 1)?;
        tasks.push(TaskData { train, test });
    }
    Ok(tasks)
}
