//! Experiment orchestration behind the command-line interface.
//!
//! Every entry point takes a validated [`ExperimentConfig`] and an output
//! directory, fans replications out over the current thread pool, and writes
//! CSV results plus a manifest. Replications own disjoint RNG substreams, so
//! outputs are byte-identical regardless of worker count.

pub mod config;
pub mod continual;
pub mod features;
pub mod output;
mod runners;

use std::path::{Path, PathBuf};

use ndarray::Array1;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::{coverage_experiment, CoverageReport};
use crate::loss::SampleBatch;
use crate::metrics::{mmse, mse_k};
use crate::rng::{substream, StreamPurpose};
use crate::schedule::ConditionReport;
use crate::sim::{deviation, SimStream, Setting};
use crate::stream::BatchSource;

use config::{ExperimentConfig, FeatureFormat};
use continual::{run_continual, ContinualOutcome, TaskData};
use features::{dump_stream, FeatureDataset, TaskAssignment};
use output::{CurveRow, MetricsRow};
use runners::build_streamers;

/// Paths written by a simulation run.
pub struct SimulationArtifacts {
    pub curves: PathBuf,
    pub summary: PathBuf,
    pub manifest: PathBuf,
    /// Per-replication estimator failures (`rep`, `algorithm`, message).
    pub failures: Vec<String>,
}

fn rate_condition_notes(cfg: &ExperimentConfig) -> Vec<String> {
    match cfg.schedule.build(cfg.sim.k) {
        Ok(schedule) => schedule
            .validate_rate_conditions(cfg.sim.p, ConditionReport::DEFAULT_THRESHOLD)
            .warnings(),
        Err(_) => Vec::new(),
    }
}

fn one_replication(cfg: &ExperimentConfig, rep: u32) -> Result<(Vec<CurveRow>, Vec<String>)> {
    let sim = &cfg.sim;
    let schedule = cfg.schedule.build(sim.k)?;
    let stream = SimStream::new(sim.clone(), rep)?;
    let theta0 = stream.theta0().clone();
    let task_params = stream.params().task_params().map(<[Array1<f64>]>::to_vec);

    let mut streamers = build_streamers(
        &cfg.run.estimators,
        &schedule,
        sim.kind,
        sim.p,
        &cfg.run.rbcl_steps,
        &stream,
        cfg.newton.options(),
    )?;
    let labels: Vec<String> = streamers.iter().map(|s| s.label()).collect();
    let mut failed: Vec<Option<String>> = vec![None; streamers.len()];

    let grid: Vec<usize> = match &cfg.run.eval_grid {
        Some(g) => g.clone(),
        None => (1..=sim.k).collect(),
    };
    let mut grid_iter = grid.iter().peekable();

    let mut rows = Vec::with_capacity(grid.len() * streamers.len());
    for k in 1..=sim.k {
        let batch = stream.batch(k);
        let new_task = match sim.setting {
            Setting::PerBatch => true,
            Setting::PerTask => (k - 1) % sim.batches_per_task() == 0,
        };
        for (idx, streamer) in streamers.iter_mut().enumerate() {
            if failed[idx].is_some() {
                continue;
            }
            if new_task {
                streamer.task_start();
            }
            if let Err(e) = streamer.ingest(&batch) {
                failed[idx] = Some(format!("rep {rep} {}: {e}", labels[idx]));
            }
        }
        if grid_iter.peek() == Some(&&k) {
            grid_iter.next();
            let dev = deviation(stream.params().for_batch(k).view(), theta0.view());
            for (idx, streamer) in streamers.iter_mut().enumerate() {
                let estimate = if failed[idx].is_some() { None } else { streamer.estimate() };
                let mse = match estimate {
                    None => f64::NAN,
                    Some(theta) => match (&sim.setting, &task_params) {
                        (Setting::PerTask, Some(params)) => {
                            mmse(theta.view(), params, sim.task_of_batch(k))?
                        }
                        _ => mse_k(theta.view(), theta0.view())?,
                    },
                };
                rows.push(CurveRow {
                    rep,
                    algorithm: labels[idx].clone(),
                    k,
                    mse,
                    deviation: dev,
                });
            }
        }
    }
    let failures = failed.into_iter().flatten().collect();
    Ok((rows, failures))
}

/// Replicated simulation study: per-replication error curves and an averaged
/// summary, deterministic for a given seed.
pub fn run_simulation(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SimulationArtifacts> {
    cfg.validate()?;
    let per_rep: Vec<Result<(Vec<CurveRow>, Vec<String>)>> = (0..cfg.run.reps)
        .into_par_iter()
        .map(|rep| one_replication(cfg, rep))
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for outcome in per_rep {
        let (mut r, mut f) = outcome?;
        rows.append(&mut r);
        failures.append(&mut f);
    }

    let curves = out_dir.join("curves.csv");
    output::write_curves(&curves, &rows)?;
    let summary = out_dir.join("summary.csv");
    output::write_summary(&summary, &output::summarize(&rows))?;

    let mut notes = rate_condition_notes(cfg);
    notes.extend(failures.iter().map(|f| format!("failure: {f}")));
    let manifest =
        output::write_manifest(out_dir, cfg.sim.master_seed, &cfg.to_toml_string(), &notes)?;
    Ok(SimulationArtifacts { curves, summary, manifest, failures })
}

/// Coverage experiment for the configured projection, written as one CSV.
pub fn run_coverage(cfg: &ExperimentConfig, out_dir: &Path) -> Result<CoverageReport> {
    cfg.validate()?;
    let schedule = cfg.schedule.build(cfg.sim.k)?;
    let direction = match &cfg.coverage.direction {
        Some(d) => Array1::from_vec(d.clone()),
        None => {
            let mut e1 = Array1::<f64>::zeros(cfg.sim.p);
            e1[0] = 1.0;
            e1
        }
    };
    let report = coverage_experiment(
        &cfg.sim,
        &schedule,
        direction.view(),
        cfg.coverage.level,
        cfg.coverage.reps,
        cfg.coverage.mode,
        cfg.newton.options(),
    )?;
    output::write_coverage(&out_dir.join("coverage.csv"), &report)?;
    let mut notes = rate_condition_notes(cfg);
    notes.push(format!(
        "coverage: {} of {} replications usable, empirical coverage {:.4}",
        report.rows.len(),
        cfg.coverage.reps,
        report.coverage
    ));
    output::write_manifest(out_dir, cfg.sim.master_seed, &cfg.to_toml_string(), &notes)?;
    Ok(report)
}

/// Splits an ingested feature dataset into tasks, batches the training rows,
/// and holds out a seeded test split per task.
pub fn tasks_from_dataset(
    dataset: &FeatureDataset,
    batch_size: usize,
    test_fraction: f64,
    master_seed: u64,
) -> Result<Vec<TaskData>> {
    let m = dataset.assignment.num_tasks();
    let mut per_task: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (row, &class) in dataset.labels.iter().enumerate() {
        let (task, _) = dataset
            .assignment
            .lookup(class)
            .expect("dataset validated against its assignment");
        per_task[task - 1].push(row);
    }
    let d = dataset.dim();
    let mut tasks = Vec::with_capacity(m);
    let mut next_index = 0usize;
    for (t, rows) in per_task.iter().enumerate() {
        if rows.is_empty() {
            return Err(Error::Config(format!("task {} has no samples", t + 1)));
        }
        let mut order = rows.clone();
        let mut rng = substream(master_seed, StreamPurpose::Shuffle, 0, (t + 1) as u64);
        order.shuffle(&mut rng);
        let mut test_count = ((order.len() as f64) * test_fraction).round() as usize;
        test_count = test_count.clamp(1, order.len() - 1);
        let (test_rows, train_rows) = order.split_at(test_count);

        let build_batch = |rows: &[usize], index: usize| -> Result<SampleBatch> {
            let mut feats = ndarray::Array2::<f64>::zeros((rows.len(), d));
            let mut resp = Array1::<f64>::zeros(rows.len());
            for (i, &row) in rows.iter().enumerate() {
                feats.row_mut(i).assign(&dataset.features.row(row));
                let (_, label) = dataset.assignment.lookup(dataset.labels[row]).unwrap();
                resp[i] = label as f64;
            }
            SampleBatch::new(feats, resp, index)
        };

        let test = build_batch(test_rows, t + 1)?;
        let mut train = Vec::new();
        for chunk in train_rows.chunks(batch_size) {
            next_index += 1;
            train.push(build_batch(chunk, next_index)?);
        }
        if train.is_empty() {
            return Err(Error::Config(format!(
                "task {} has no training batches after the test split",
                t + 1
            )));
        }
        tasks.push(TaskData { train, test });
    }
    Ok(tasks)
}

/// Full real-data pipeline: ingest features, stream tasks through the
/// selected estimators, and write the accuracy grid plus transfer metrics.
pub fn run_real_data(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<ContinualOutcome>> {
    cfg.validate()?;
    let rd = cfg
        .real_data
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [real_data] section".into()))?;
    let raw = features::read_raw(Path::new(&rd.path), rd.format)?;
    let assignment = match &rd.assignment {
        Some(map) => TaskAssignment::from_config(map)?,
        None => features::default_assignment_from_labels(&raw.labels)?,
    };
    let dataset = features::dataset_from_raw(raw, assignment)?;
    let tasks = tasks_from_dataset(&dataset, rd.batch_size, rd.test_fraction, cfg.sim.master_seed)?;
    let outcomes = run_continual(
        &tasks,
        &cfg.run.estimators,
        &cfg.schedule,
        &cfg.run.rbcl_steps,
        cfg.newton.options(),
        cfg.sim.master_seed,
        0,
    )?;
    output::write_accuracy(&out_dir.join("accuracy.csv"), &outcomes)?;
    output::write_metrics_rows(
        &out_dir.join("transfer_metrics.csv"),
        &output::metrics_rows(&outcomes)?,
    )?;
    let notes = vec![format!(
        "real data: {} samples, {} tasks from {}",
        dataset.num_samples(),
        dataset.assignment.num_tasks(),
        rd.path
    )];
    output::write_manifest(out_dir, cfg.sim.master_seed, &cfg.to_toml_string(), &notes)?;
    Ok(outcomes)
}

/// Writes the configured synthetic stream to a feature file for replay.
pub fn run_dump_stream(cfg: &ExperimentConfig, format: FeatureFormat, path: &Path) -> Result<()> {
    cfg.sim.validate()?;
    let stream = SimStream::new(cfg.sim.clone(), 0)?;
    dump_stream(&stream, format, path)
}

/// Recomputes transfer metrics from a previously written accuracy file.
pub fn recompute_metrics(accuracy_path: &Path, out_dir: &Path) -> Result<Vec<MetricsRow>> {
    let grids = output::read_accuracy_csv(accuracy_path)?;
    let rows = output::metrics_rows_from_matrices(&grids)?;
    output::write_metrics_rows(&out_dir.join("transfer_metrics.csv"), &rows)?;
    Ok(rows)
}
