//! End-to-end acceptance suite. Each criterion runs at its stated tolerance
//! and prints one pass/fail line; run with `--nocapture` to see them:
//!
//! ```text
//! cargo test --test acceptance -- --nocapture
//! ```

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use ndarray::{array, Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use msni::estimators::{msni_run, osni_run, pooled_oracle, NewtonOptions, WlseState};
use msni::harness::config::{EstimatorKind, ExperimentConfig, RunConfig, ScheduleSpec};
use msni::harness::continual::{run_continual, synthetic_tasks};
use msni::harness::{output, run_simulation};
use msni::inference::{coverage_experiment, VarianceMode};
use msni::loss::{
    loss_gradient, loss_gradient_hessian, loss_value, ModelKind, SampleBatch,
};
use msni::metrics::{aia, bwt, fwt, AccuracyMatrix};
use msni::rng::{substream, StreamPurpose};
use msni::schedule::StageSchedule;
use msni::sim::{deviation, gen_covariates, SimConfig, SimStream, Setting};
use msni::stream::BatchSource;

type Outcome = Result<String, String>;

#[allow(clippy::too_many_arguments)]
fn sim_config(
    p: usize,
    k: usize,
    n: usize,
    sigma: f64,
    kind: ModelKind,
    setting: Setting,
    num_tasks: usize,
    seed: u64,
) -> SimConfig {
    SimConfig { p, k, n, sigma, setting, num_tasks, kind, master_seed: seed }
}

/// A1: analytic gradients and Hessians against central finite differences on
/// 100 random (batch, parameter) pairs per model.
fn a1_derivative_correctness() -> Outcome {
    let mut rng = substream(101, StreamPurpose::Batch, 0, 0);
    let p = 4;
    for kind in [ModelKind::Linear, ModelKind::Logistic] {
        for pair in 0..100 {
            let x = gen_covariates(30, p, &mut rng);
            let y = match kind {
                ModelKind::Linear => {
                    Array1::from_shape_fn(30, |_| rng.sample::<f64, _>(StandardNormal))
                }
                ModelKind::Logistic => Array1::from_shape_fn(30, |_| {
                    if rng.gen_bool(0.5) {
                        1.0
                    } else {
                        0.0
                    }
                }),
            };
            let batch = SampleBatch::new(x, y, 1).map_err(|e| e.to_string())?;
            let theta = Array1::from_shape_fn(p, |_| rng.sample::<f64, _>(StandardNormal));
            let (grad, hess) =
                loss_gradient_hessian(&batch, kind, theta.view()).map_err(|e| e.to_string())?;

            let mut fd_grad = Array1::<f64>::zeros(p);
            let mut fd_hess = Array2::<f64>::zeros((p, p));
            for j in 0..p {
                let h = 1e-5 * (1.0 + theta[j].abs());
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[j] += h;
                dn[j] -= h;
                let vu = loss_value(&batch, kind, up.view()).unwrap();
                let vd = loss_value(&batch, kind, dn.view()).unwrap();
                fd_grad[j] = (vu - vd) / (2.0 * h);
                let gu = loss_gradient(&batch, kind, up.view()).unwrap();
                let gd = loss_gradient(&batch, kind, dn.view()).unwrap();
                for i in 0..p {
                    fd_hess[[i, j]] = (gu[i] - gd[i]) / (2.0 * h);
                }
            }
            let rel = |a: &Array1<f64>, b: &Array1<f64>| {
                let scale = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                (a - b).iter().map(|v| v * v).sum::<f64>().sqrt() / scale
            };
            let g_rel = rel(&fd_grad, &grad);
            if g_rel > 1e-6 {
                return Err(format!("{kind} pair {pair}: gradient mismatch {g_rel:.2e}"));
            }
            let h_scale = hess.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            let h_rel =
                (&fd_hess - &hess).iter().map(|v| v * v).sum::<f64>().sqrt() / h_scale;
            if h_rel > 1e-5 {
                return Err(format!("{kind} pair {pair}: hessian mismatch {h_rel:.2e}"));
            }
        }
    }
    Ok("200 randomized pairs within 1e-6 / 1e-5 relative".into())
}

/// A2: exact stage boundaries for the reference schedule.
fn a2_schedule_exactness() -> Outcome {
    let s = StageSchedule::build(1000, 0.5, &[0.625, 0.75, 0.875, 1.0])
        .map_err(|e| e.to_string())?;
    if s.initial_window() != 31 {
        return Err(format!("initial window {} != 31", s.initial_window()));
    }
    if s.boundaries() != [74, 177, 421, 1000] {
        return Err(format!("boundaries {:?}", s.boundaries()));
    }
    Ok("windows (31, 74, 177, 421, 1000) exact".into())
}

fn msni_final_mse(cfg: &SimConfig, schedule: &StageSchedule, rep: u32) -> Result<f64, String> {
    let stream = SimStream::new(cfg.clone(), rep).map_err(|e| e.to_string())?;
    let (theta, _) =
        msni_run(stream.iter_batches(), schedule, cfg.kind).map_err(|e| e.to_string())?;
    Ok(deviation(theta.view(), stream.theta0().view()))
}

/// A3: quadrupling the stream length quarters the final error (1/K rate).
fn a3_rate_in_stream_length() -> Outcome {
    let reps = 200u32;
    let mut means = Vec::new();
    for k in [500usize, 2000] {
        let cfg = sim_config(10, k, 100, 1.0 / 20.0, ModelKind::Linear, Setting::PerBatch, 1, 300);
        let schedule = StageSchedule::default_spacing(k, 4, 0.5).map_err(|e| e.to_string())?;
        let total: f64 = (0..reps)
            .into_par_iter()
            .map(|rep| msni_final_mse(&cfg, &schedule, rep))
            .collect::<Result<Vec<f64>, String>>()?
            .iter()
            .sum();
        means.push(total / reps as f64);
    }
    let ratio = means[1] / means[0];
    if !(0.15..=0.45).contains(&ratio) {
        return Err(format!(
            "mse ratio {ratio:.4} outside [0.15, 0.45] (mse500={:.3e}, mse2000={:.3e})",
            means[0], means[1]
        ));
    }
    Ok(format!("mse(K=2000)/mse(K=500) = {ratio:.3} in [0.15, 0.45]"))
}

/// A4: without parameter heterogeneity the multi-stage estimate hugs the
/// pooled oracle to second order.
fn a4_oracle_equivalence() -> Outcome {
    let reps = 100u32;
    let cfg = sim_config(5, 200, 50, 0.0, ModelKind::Linear, Setting::PerBatch, 1, 400);
    let schedule = StageSchedule::build(200, 0.5, &[0.6, 1.0]).map_err(|e| e.to_string())?;
    let opts = NewtonOptions::default();
    let pairs: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<(f64, f64), String> {
            let stream = SimStream::new(cfg.clone(), rep).map_err(|e| e.to_string())?;
            let (theta, _) = msni_run(stream.iter_batches(), &schedule, cfg.kind)
                .map_err(|e| e.to_string())?;
            let oracle =
                pooled_oracle(&stream, cfg.kind, &opts).map_err(|e| e.to_string())?;
            Ok((
                deviation(theta.view(), oracle.view()),
                deviation(oracle.view(), stream.theta0().view()),
            ))
        })
        .collect::<Result<Vec<_>, String>>()?;
    let gap: f64 = pairs.iter().map(|p| p.0).sum::<f64>() / reps as f64;
    let oracle_err: f64 = pairs.iter().map(|p| p.1).sum::<f64>() / reps as f64;
    if gap > 0.25 * oracle_err {
        return Err(format!(
            "mean gap {gap:.3e} exceeds 0.25 * oracle error {oracle_err:.3e}"
        ));
    }
    Ok(format!(
        "oracle gap / oracle error = {:.3} <= 0.25",
        gap / oracle_err
    ))
}

fn coverage_report(
    sigma: f64,
    mode: VarianceMode,
    seed: u64,
) -> Result<msni::inference::CoverageReport, String> {
    let cfg = sim_config(5, 500, 100, sigma, ModelKind::Linear, Setting::PerBatch, 1, seed);
    let schedule = StageSchedule::build(500, 0.5, &[0.55, 1.0]).map_err(|e| e.to_string())?;
    let mut e1 = Array1::<f64>::zeros(5);
    e1[0] = 1.0;
    let report =
        coverage_experiment(&cfg, &schedule, e1.view(), 0.95, 500, mode, Default::default())
            .map_err(|e| e.to_string())?;
    if report.failures > 0 {
        return Err(format!("{} replications failed", report.failures));
    }
    if !(0.90..=0.98).contains(&report.coverage) {
        return Err(format!("coverage {:.4} outside [0.90, 0.98]", report.coverage));
    }
    Ok(report)
}

/// A5: nominal 95% intervals under batch-level parameter noise, with
/// standardized statistics close to standard normal.
fn a5_coverage_heterogeneous() -> Outcome {
    let report = coverage_report(1.0 / 20.0, VarianceMode::Heterogeneous, 500)?;
    if !(-0.15..=0.15).contains(&report.stat_mean) {
        return Err(format!("standardized mean {:+.4} outside [-0.15, 0.15]", report.stat_mean));
    }
    if !(0.8..=1.25).contains(&report.stat_var) {
        return Err(format!("standardized variance {:.4} outside [0.8, 1.25]", report.stat_var));
    }
    Ok(format!(
        "coverage {:.3}, stat mean {:+.3}, stat var {:.3}",
        report.coverage, report.stat_mean, report.stat_var
    ))
}

/// A6: same protocol in the homogeneous regime (variance scale K*n).
fn a6_coverage_homogeneous() -> Outcome {
    let report = coverage_report(0.0, VarianceMode::Homogeneous, 600)?;
    Ok(format!(
        "coverage {:.3}, stat mean {:+.3}, stat var {:.3}",
        report.coverage, report.stat_mean, report.stat_var
    ))
}

/// A7: under strong heterogeneity the multi-stage estimator beats the
/// Hessian-weighted combination of per-batch fits (logistic curvature makes
/// those weights parameter-dependent and biased).
fn a7_beats_wlse_logistic() -> Outcome {
    let reps = 50u32;
    let cfg = sim_config(10, 500, 1000, 0.2, ModelKind::Logistic, Setting::PerBatch, 1, 700);
    let schedule = StageSchedule::build(500, 0.5, &[0.6, 1.0]).map_err(|e| e.to_string())?;
    let pairs: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<(f64, f64), String> {
            let stream = SimStream::new(cfg.clone(), rep).map_err(|e| e.to_string())?;
            let (theta, _) = msni_run(stream.iter_batches(), &schedule, cfg.kind)
                .map_err(|e| e.to_string())?;
            let mut wlse = WlseState::new(cfg.p, cfg.kind);
            for k in 1..=cfg.k {
                wlse.ingest(&stream.batch(k)).map_err(|e| e.to_string())?;
            }
            if wlse.skipped() > 0 {
                return Err(format!("rep {rep}: {} batches skipped", wlse.skipped()));
            }
            let w = wlse.finalize().map_err(|e| e.to_string())?;
            let theta0 = stream.theta0();
            Ok((
                deviation(theta.view(), theta0.view()),
                deviation(w.view(), theta0.view()),
            ))
        })
        .collect::<Result<Vec<_>, String>>()?;
    let msni_mean: f64 = pairs.iter().map(|p| p.0).sum::<f64>() / reps as f64;
    let wlse_mean: f64 = pairs.iter().map(|p| p.1).sum::<f64>() / reps as f64;
    if msni_mean > wlse_mean {
        return Err(format!("msni {msni_mean:.4} > wlse {wlse_mean:.4}"));
    }
    Ok(format!("final mse: msni {msni_mean:.4} <= wlse {wlse_mean:.4}"))
}

/// A8: the one-stage runner is exactly the T = 1 special case.
fn a8_osni_msni_consistency() -> Outcome {
    for seed in 800..820u64 {
        let cfg = sim_config(4, 50, 60, 0.1, ModelKind::Logistic, Setting::PerBatch, 1, seed);
        let stream = SimStream::new(cfg.clone(), 0).map_err(|e| e.to_string())?;
        let schedule = StageSchedule::build(50, 0.5, &[1.0]).map_err(|e| e.to_string())?;
        let (a, _) = msni_run(stream.iter_batches(), &schedule, cfg.kind)
            .map_err(|e| e.to_string())?;
        let (b, _) =
            osni_run(stream.iter_batches(), 50, 0.5, cfg.kind).map_err(|e| e.to_string())?;
        for j in 0..4 {
            let rel = (a[j] - b[j]).abs() / b[j].abs().max(1e-12);
            if rel > 1e-12 {
                return Err(format!("seed {seed} component {j}: relative gap {rel:.2e}"));
            }
        }
    }
    Ok("20 seeds agree within 1e-12".into())
}

/// A9: transfer-metric identities on constant and hand-built grids.
fn a9_metric_identities() -> Outcome {
    let constant = AccuracyMatrix::new(Array2::from_elem((6, 5), 0.7)).unwrap();
    if (aia(&constant).unwrap() - 0.7).abs() > 1e-15 {
        return Err("aia of constant grid".into());
    }
    if fwt(&constant).unwrap() != 0.0 || bwt(&constant).unwrap() != 0.0 {
        return Err("transfer of constant grid".into());
    }
    // forward gaps (0.2, -0.1) -> 0.05
    let mut g = Array2::from_elem((4, 3), 0.5);
    g[[1, 1]] = 0.7;
    g[[0, 2]] = 0.6;
    g[[2, 2]] = 0.5;
    let m = AccuracyMatrix::new(g).unwrap();
    if (fwt(&m).unwrap() - 0.05).abs() > 1e-15 {
        return Err(format!("fwt hand value {}", fwt(&m).unwrap()));
    }
    // backward drops (-0.1, 0.0) -> -0.05
    let mut g = Array2::from_elem((4, 3), 0.8);
    g[[3, 0]] = 0.7;
    let m = AccuracyMatrix::new(g).unwrap();
    if (bwt(&m).unwrap() + 0.05).abs() > 1e-15 {
        return Err(format!("bwt hand value {}", bwt(&m).unwrap()));
    }
    // average accuracies (1.0, 0.5) -> 0.75
    let m = AccuracyMatrix::new(array![[0.0, 0.0], [1.0, 0.0], [0.2, 0.8]]).unwrap();
    if (aia(&m).unwrap() - 0.75).abs() > 1e-15 {
        return Err(format!("aia hand value {}", aia(&m).unwrap()));
    }
    Ok("constant and hand-built grids reproduce exact values".into())
}

/// A10: on five-task streams the multi-stage estimator retains old tasks
/// better than the fit-the-current-task baseline.
fn a10_continual_ordering() -> Outcome {
    let reps = 20u32;
    let cfg = sim_config(50, 100, 200, 0.2, ModelKind::Logistic, Setting::PerTask, 5, 1000);
    let spec = ScheduleSpec { alpha0: 0.55, alphas: None, stages: Some(5) };
    let estimators = [EstimatorKind::Msni, EstimatorKind::MleSequential];
    let metrics: Vec<(f64, f64, f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<(f64, f64, f64, f64), String> {
            let tasks = synthetic_tasks(&cfg, 4000, rep).map_err(|e| e.to_string())?;
            let outcomes = run_continual(
                &tasks,
                &estimators,
                &spec,
                &[1.0],
                Default::default(),
                cfg.master_seed,
                rep,
            )
            .map_err(|e| e.to_string())?;
            let msni = &outcomes[0].matrix;
            let mle = &outcomes[1].matrix;
            Ok((
                aia(msni).unwrap(),
                aia(mle).unwrap(),
                bwt(msni).unwrap(),
                bwt(mle).unwrap(),
            ))
        })
        .collect::<Result<Vec<_>, String>>()?;
    let mean = |f: fn(&(f64, f64, f64, f64)) -> f64| {
        metrics.iter().map(f).sum::<f64>() / reps as f64
    };
    let (aia_msni, aia_mle) = (mean(|m| m.0), mean(|m| m.1));
    let (bwt_msni, bwt_mle) = (mean(|m| m.2), mean(|m| m.3));
    if aia_msni < aia_mle {
        return Err(format!("aia: msni {aia_msni:.4} < mle {aia_mle:.4}"));
    }
    if bwt_msni <= bwt_mle {
        return Err(format!("bwt: msni {bwt_msni:+.4} <= mle {bwt_mle:+.4}"));
    }
    Ok(format!(
        "aia {aia_msni:.4} >= {aia_mle:.4}; bwt {bwt_msni:+.4} > {bwt_mle:+.4}"
    ))
}

/// A11: identical bytes from any worker count.
fn a11_thread_determinism() -> Outcome {
    let cfg = ExperimentConfig {
        sim: sim_config(10, 500, 100, 1.0 / 20.0, ModelKind::Linear, Setting::PerBatch, 1, 1100),
        schedule: ScheduleSpec { alpha0: 0.5, alphas: None, stages: Some(4) },
        run: RunConfig {
            estimators: vec![EstimatorKind::Msni, EstimatorKind::Osni, EstimatorKind::Wlse],
            reps: 8,
            eval_grid: None,
            output_dir: "out".into(),
            rbcl_steps: vec![1.0],
        },
        newton: Default::default(),
        coverage: Default::default(),
        real_data: None,
    };
    let run_with = |threads: usize| -> Result<(String, String), String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        let artifacts =
            pool.install(|| run_simulation(&cfg, dir.path())).map_err(|e| e.to_string())?;
        let curves = std::fs::read_to_string(&artifacts.curves).map_err(|e| e.to_string())?;
        let summary = std::fs::read_to_string(&artifacts.summary).map_err(|e| e.to_string())?;
        Ok((curves, summary))
    };
    let single = run_with(1)?;
    let multi = run_with(4)?;
    if single != multi {
        return Err("outputs differ across thread counts".into());
    }
    // also exercise the summary writer on the single-thread output
    let rows = output::summarize(&[]);
    if !rows.is_empty() {
        return Err("summarize of empty input must be empty".into());
    }
    Ok("curves and summary byte-identical at 1 and 4 threads".into())
}

struct Criterion {
    id: &'static str,
    what: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

#[test]
fn acceptance_criteria() {
    let criteria = [
        Criterion {
            id: "A1",
            what: "derivatives vs finite differences",
            budget: Duration::from_secs(10),
            run: a1_derivative_correctness,
        },
        Criterion {
            id: "A2",
            what: "schedule boundary exactness",
            budget: Duration::from_secs(1),
            run: a2_schedule_exactness,
        },
        Criterion {
            id: "A3",
            what: "1/K error rate",
            budget: Duration::from_secs(300),
            run: a3_rate_in_stream_length,
        },
        Criterion {
            id: "A4",
            what: "pooled-oracle equivalence without heterogeneity",
            budget: Duration::from_secs(120),
            run: a4_oracle_equivalence,
        },
        Criterion {
            id: "A5",
            what: "CI coverage, heterogeneous variance",
            budget: Duration::from_secs(600),
            run: a5_coverage_heterogeneous,
        },
        Criterion {
            id: "A6",
            what: "CI coverage, homogeneous variance",
            budget: Duration::from_secs(600),
            run: a6_coverage_homogeneous,
        },
        Criterion {
            id: "A7",
            what: "beats per-batch weighting under heterogeneity",
            budget: Duration::from_secs(900),
            run: a7_beats_wlse_logistic,
        },
        Criterion {
            id: "A8",
            what: "one-stage consistency",
            budget: Duration::from_secs(60),
            run: a8_osni_msni_consistency,
        },
        Criterion {
            id: "A9",
            what: "transfer-metric identities",
            budget: Duration::from_secs(1),
            run: a9_metric_identities,
        },
        Criterion {
            id: "A10",
            what: "five-task retention ordering",
            budget: Duration::from_secs(600),
            run: a10_continual_ordering,
        },
        Criterion {
            id: "A11",
            what: "thread-count determinism",
            budget: Duration::from_secs(300),
            run: a11_thread_determinism,
        },
    ];

    let mut failures = Vec::new();
    for c in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run))
            .unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) if elapsed <= c.budget => {
                println!("[{}] PASS {:6.1}s  {} - {}", c.id, elapsed.as_secs_f64(), c.what, detail);
            }
            Ok(detail) => {
                println!(
                    "[{}] FAIL {:6.1}s  {} - over budget ({:?} allowed) - {}",
                    c.id,
                    elapsed.as_secs_f64(),
                    c.what,
                    c.budget,
                    detail
                );
                failures.push(format!("{} over budget", c.id));
            }
            Err(reason) => {
                println!(
                    "[{}] FAIL {:6.1}s  {} - {}",
                    c.id,
                    elapsed.as_secs_f64(),
                    c.what,
                    reason
                );
                failures.push(format!("{}: {reason}", c.id));
            }
        }
    }
    assert!(failures.is_empty(), "acceptance failures: {failures:?}");
}
