//! Damped Newton solver for pooled M-estimation.
//!
//! Minimizes the mean of batch-mean losses `(1/B) sum_k L_k(theta)` until the
//! pooled gradient norm drops below tolerance. Steps are halved while the
//! pooled loss fails to decrease; the stage updates of the streaming
//! estimators never damp, only this full solver does.
//!
//! The pooled objective can be evaluated either over batches held in memory
//! or by replaying a [`BatchSource`] (regenerating each batch per sweep), so
//! full-data fits never need the stream materialized.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::linalg::{norm, solve_spd_guarded_with};
use crate::loss::{loss_gradient_hessian, loss_value, ModelKind, SampleBatch};
use crate::stream::BatchSource;

/// Solver tuning knobs.
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Stop when the pooled gradient norm falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Maximum step halvings per iteration.
    pub max_halvings: usize,
    /// Condition proxy above which the ridge guard engages.
    pub ridge_cond_limit: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            max_halvings: 30,
            ridge_cond_limit: crate::linalg::COND_LIMIT,
        }
    }
}

/// A logistic fit whose mean loss vanishes has no interior minimizer
/// (complete separation); the iterates escape to infinity while the gradient
/// dies, so convergence-by-tolerance must not be trusted below this loss.
const SEPARATION_LOSS: f64 = 1e-8;

const DIVERGENCE_NORM: f64 = 1e10;

/// Pooled mean-loss objective over some collection of batches.
trait PooledObjective {
    fn value(&self, theta: ArrayView1<'_, f64>) -> Result<f64>;
    fn grad_hess(&self, theta: ArrayView1<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)>;
}

struct SliceObjective<'a> {
    batches: &'a [SampleBatch],
    kind: ModelKind,
}

impl PooledObjective for SliceObjective<'_> {
    fn value(&self, theta: ArrayView1<'_, f64>) -> Result<f64> {
        let mut total = 0.0;
        for b in self.batches {
            total += loss_value(b, self.kind, theta)?;
        }
        Ok(total / self.batches.len() as f64)
    }

    fn grad_hess(&self, theta: ArrayView1<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
        let p = theta.len();
        let mut grad = Array1::<f64>::zeros(p);
        let mut hess = Array2::<f64>::zeros((p, p));
        for b in self.batches {
            let (g, h) = loss_gradient_hessian(b, self.kind, theta)?;
            grad += &g;
            hess += &h;
        }
        let scale = 1.0 / self.batches.len() as f64;
        grad.mapv_inplace(|v| v * scale);
        hess.mapv_inplace(|v| v * scale);
        Ok((grad, hess))
    }
}

struct ReplayObjective<'a, S: BatchSource> {
    source: &'a S,
    upto: usize,
    kind: ModelKind,
}

impl<S: BatchSource> PooledObjective for ReplayObjective<'_, S> {
    fn value(&self, theta: ArrayView1<'_, f64>) -> Result<f64> {
        let mut total = 0.0;
        for k in 1..=self.upto {
            total += loss_value(&self.source.batch(k), self.kind, theta)?;
        }
        Ok(total / self.upto as f64)
    }

    fn grad_hess(&self, theta: ArrayView1<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
        let p = theta.len();
        let mut grad = Array1::<f64>::zeros(p);
        let mut hess = Array2::<f64>::zeros((p, p));
        for k in 1..=self.upto {
            let (g, h) = loss_gradient_hessian(&self.source.batch(k), self.kind, theta)?;
            grad += &g;
            hess += &h;
        }
        let scale = 1.0 / self.upto as f64;
        grad.mapv_inplace(|v| v * scale);
        hess.mapv_inplace(|v| v * scale);
        Ok((grad, hess))
    }
}

fn non_convergence(iterations: usize, grad_norm: f64, reason: &str, theta: &Array1<f64>) -> Error {
    Error::NonConvergence {
        iterations,
        grad_norm,
        reason: reason.to_string(),
        last_iterate: theta.to_vec(),
    }
}

fn newton_core(
    objective: &impl PooledObjective,
    kind: ModelKind,
    init: ArrayView1<'_, f64>,
    opts: &NewtonOptions,
) -> Result<Array1<f64>> {
    if opts.tol <= 0.0 {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let mut theta = init.to_owned();
    let mut current_loss = objective.value(theta.view())?;
    let mut grad_norm = f64::INFINITY;
    for iter in 0..opts.max_iter {
        let (grad, hess) = objective.grad_hess(theta.view())?;
        grad_norm = norm(grad.view());
        if grad_norm <= opts.tol {
            if kind == ModelKind::Logistic && current_loss < SEPARATION_LOSS {
                return Err(non_convergence(
                    iter,
                    grad_norm,
                    "loss vanished: complete separation, no finite minimizer",
                    &theta,
                ));
            }
            return Ok(theta);
        }
        let direction = solve_spd_guarded_with(hess.view(), grad.view(), opts.ridge_cond_limit)?;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let candidate = &theta - &(step * &direction);
            let cand_loss = objective.value(candidate.view())?;
            if cand_loss.is_finite()
                && cand_loss <= current_loss + 1e-12 * (1.0 + current_loss.abs())
            {
                theta = candidate;
                current_loss = cand_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(non_convergence(
                iter + 1,
                grad_norm,
                "line search failed to decrease the pooled loss",
                &theta,
            ));
        }
        if theta.iter().any(|v| !v.is_finite()) || norm(theta.view()) > DIVERGENCE_NORM {
            return Err(non_convergence(iter + 1, grad_norm, "iterates diverged", &theta));
        }
    }
    Err(non_convergence(opts.max_iter, grad_norm, "gradient tolerance not reached", &theta))
}

/// Damped Newton on the pooled mean loss over `batches`, starting from `init`.
///
/// For the linear model this lands on the least-squares solution in a single
/// undamped step. Logistic problems without an interior minimizer (separable
/// data) are flagged as non-convergent rather than returning the escaping
/// iterate.
pub fn solve_newton(
    batches: &[SampleBatch],
    kind: ModelKind,
    init: ArrayView1<'_, f64>,
    opts: &NewtonOptions,
) -> Result<Array1<f64>> {
    if batches.is_empty() {
        return Err(Error::InvalidInput("solve_newton needs at least one batch".into()));
    }
    newton_core(&SliceObjective { batches, kind }, kind, init, opts)
}

/// Same solver over the first `upto` batches of a replayable source. Each
/// sweep regenerates the batches, keeping memory at `O(p^2)`.
pub fn solve_newton_replay<S: BatchSource>(
    source: &S,
    upto: usize,
    kind: ModelKind,
    init: ArrayView1<'_, f64>,
    opts: &NewtonOptions,
) -> Result<Array1<f64>> {
    if upto == 0 || upto > source.len() {
        return Err(Error::InvalidInput(format!(
            "replay range 1..={upto} invalid for a stream of {}",
            source.len()
        )));
    }
    newton_core(&ReplayObjective { source, upto, kind }, kind, init, opts)
}

/// Pooled M-estimate over the stored initial window, from a zero start.
/// The raw batches may be discarded once this returns.
pub fn initial_m_estimate(
    batches: &[SampleBatch],
    kind: ModelKind,
    opts: &NewtonOptions,
) -> Result<Array1<f64>> {
    let p = batches
        .first()
        .ok_or_else(|| Error::InvalidInput("initial window is empty".into()))?
        .dim();
    solve_newton(batches, kind, Array1::<f64>::zeros(p).view(), opts)
}
