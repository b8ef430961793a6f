//! Regularization-based continual-learning baseline.
//!
//! Each incoming batch nudges the estimate by a step-scaled Newton direction
//! whose preconditioner is the mean of the Hessians accumulated from earlier
//! batches, each evaluated at the estimate current after that batch:
//!
//! ```text
//! theta_new = theta_prev - step * mean_hess^{-1} grad(batch, theta_prev)
//! ```
//!
//! After the update the batch's Hessian at `theta_new` joins the accumulator.
//! The very first batch is fit directly. Step factors of 1.0, 0.1 and 0.01
//! are the conventional grid.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::solve_spd_guarded;
use crate::loss::{loss_gradient, loss_hessian, ModelKind, SampleBatch};

use super::newton::{solve_newton, NewtonOptions};

/// One preconditioned gradient step. `mean_hess` is the mean of the
/// accumulated Hessians of previously seen batches.
pub fn rbcl_update(
    theta_prev: ArrayView1<'_, f64>,
    mean_hess: ArrayView2<'_, f64>,
    batch: &SampleBatch,
    kind: ModelKind,
    step: f64,
) -> Result<Array1<f64>> {
    if step <= 0.0 {
        return Err(Error::InvalidInput("step factor must be positive".into()));
    }
    let grad = loss_gradient(batch, kind, theta_prev)?;
    let direction = solve_spd_guarded(mean_hess, grad.view())?;
    Ok(&theta_prev.to_owned() - &(step * &direction))
}

/// Streaming state: estimate plus accumulated Hessians.
#[derive(Debug, Clone)]
pub struct RbclState {
    kind: ModelKind,
    opts: NewtonOptions,
    step: f64,
    hess_sum: Array2<f64>,
    count: usize,
    estimate: Option<Array1<f64>>,
}

impl RbclState {
    pub fn new(p: usize, kind: ModelKind, step: f64) -> Self {
        Self::with_options(p, kind, step, NewtonOptions::default())
    }

    pub fn with_options(p: usize, kind: ModelKind, step: f64, opts: NewtonOptions) -> Self {
        Self {
            kind,
            opts,
            step,
            hess_sum: Array2::zeros((p, p)),
            count: 0,
            estimate: None,
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn estimate(&self) -> Option<&Array1<f64>> {
        self.estimate.as_ref()
    }

    pub fn ingest(&mut self, batch: &SampleBatch) -> Result<()> {
        let theta = match &self.estimate {
            None => {
                // first batch: solve directly
                let p = batch.dim();
                solve_newton(
                    std::slice::from_ref(batch),
                    self.kind,
                    Array1::<f64>::zeros(p).view(),
                    &self.opts,
                )?
            }
            Some(prev) => {
                let mean_hess = &self.hess_sum / self.count as f64;
                rbcl_update(prev.view(), mean_hess.view(), batch, self.kind, self.step)?
            }
        };
        self.hess_sum += &loss_hessian(batch, self.kind, theta.view())?;
        self.count += 1;
        self.estimate = Some(theta);
        Ok(())
    }
}
