//! Running sums of per-batch mean gradients and Hessians.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::loss::{loss_gradient_hessian, ModelKind, SampleBatch};

/// Additive accumulator for Newton updates. Each ingested batch contributes
/// its mean gradient and mean Hessian, evaluated at whatever estimate was
/// current when the batch arrived; the accumulator itself never re-evaluates.
///
/// Merging two accumulators over disjoint batch sets equals accumulating the
/// union, up to floating-point reordering.
#[derive(Debug, Clone)]
pub struct NewtonAccumulator {
    grad_sum: Array1<f64>,
    hess_sum: Array2<f64>,
    count: usize,
}

impl NewtonAccumulator {
    pub fn new(p: usize) -> Self {
        Self {
            grad_sum: Array1::zeros(p),
            hess_sum: Array2::zeros((p, p)),
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.grad_sum.len()
    }

    /// Number of batches accumulated so far.
    pub fn count(&self) -> usize {
        self.count
    }

    /// Add an already-evaluated (gradient, Hessian) pair.
    pub fn add(&mut self, grad: &Array1<f64>, hess: &Array2<f64>) -> Result<()> {
        if grad.len() != self.dim() || hess.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: grad.len(),
                context: "accumulator add",
            });
        }
        self.grad_sum += grad;
        self.hess_sum += hess;
        self.count += 1;
        Ok(())
    }

    /// Evaluate the batch at `theta` and fold it in.
    pub fn accumulate(
        &mut self,
        batch: &SampleBatch,
        kind: ModelKind,
        theta: ArrayView1<'_, f64>,
    ) -> Result<()> {
        let (g, h) = loss_gradient_hessian(batch, kind, theta)?;
        self.add(&g, &h)
    }

    /// Fold another accumulator (over a disjoint batch set) into this one.
    pub fn merge(&mut self, other: &NewtonAccumulator) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
                context: "accumulator merge",
            });
        }
        self.grad_sum += &other.grad_sum;
        self.hess_sum += &other.hess_sum;
        self.count += other.count;
        Ok(())
    }

    pub fn grad_sum(&self) -> &Array1<f64> {
        &self.grad_sum
    }

    pub fn hess_sum(&self) -> &Array2<f64> {
        &self.hess_sum
    }

    pub fn mean_gradient(&self) -> Array1<f64> {
        &self.grad_sum / self.count.max(1) as f64
    }

    pub fn mean_hessian(&self) -> Array2<f64> {
        &self.hess_sum / self.count.max(1) as f64
    }
}
