//! Weighted least-squares combination of per-batch M-estimates.
//!
//! Each incoming batch is fit on its own; the per-batch Hessian at that fit
//! serves as the weight. The combined estimate solves
//! `(sum_k W_k) theta = sum_k W_k theta_hat_k`. Batches whose individual fit
//! fails (separable logistic batches, or singular systems beyond the ridge
//! guard) are skipped and counted, preserving the weighted-average form over
//! the batches that do admit an estimate.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg::solve_spd_guarded;
use crate::loss::{loss_hessian, ModelKind, SampleBatch};

use super::newton::{solve_newton, NewtonOptions};

#[derive(Debug, Clone)]
pub struct WlseState {
    kind: ModelKind,
    opts: NewtonOptions,
    hess_total: Array2<f64>,
    weighted_sum: Array1<f64>,
    count: usize,
    skipped: usize,
}

impl WlseState {
    pub fn new(p: usize, kind: ModelKind) -> Self {
        Self::with_options(p, kind, NewtonOptions::default())
    }

    pub fn with_options(p: usize, kind: ModelKind, opts: NewtonOptions) -> Self {
        Self {
            kind,
            opts,
            hess_total: Array2::zeros((p, p)),
            weighted_sum: Array1::zeros(p),
            count: 0,
            skipped: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weighted_sum.len()
    }

    /// Batches combined so far.
    pub fn count(&self) -> usize {
        self.count
    }

    /// Batches dropped because their individual fit failed.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn hess_total(&self) -> &Array2<f64> {
        &self.hess_total
    }

    /// Fits the batch alone and folds its Hessian-weighted estimate in.
    pub fn ingest(&mut self, batch: &SampleBatch) -> Result<()> {
        if batch.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: batch.dim(),
                context: "wlse ingest",
            });
        }
        let init = Array1::<f64>::zeros(self.dim());
        let fit = match solve_newton(std::slice::from_ref(batch), self.kind, init.view(), &self.opts)
        {
            Ok(theta) => theta,
            Err(Error::NonConvergence { .. }) | Err(Error::SingularSystem(_)) => {
                self.skipped += 1;
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        let weight = loss_hessian(batch, self.kind, fit.view())?;
        self.weighted_sum += &weight.dot(&fit);
        self.hess_total += &weight;
        self.count += 1;
        Ok(())
    }

    /// Fold a disjoint accumulation into this one.
    pub fn merge(&mut self, other: &WlseState) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
                context: "wlse merge",
            });
        }
        self.hess_total += &other.hess_total;
        self.weighted_sum += &other.weighted_sum;
        self.count += other.count;
        self.skipped += other.skipped;
        Ok(())
    }

    /// Solves the weighted system. Requires at least one combined batch.
    pub fn finalize(&self) -> Result<Array1<f64>> {
        if self.count == 0 {
            return Err(Error::InvalidInput(
                "no batch produced a usable per-batch estimate".into(),
            ));
        }
        solve_spd_guarded(self.hess_total.view(), self.weighted_sum.view())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scalar_batch(x: f64, y: f64, idx: usize) -> SampleBatch {
        SampleBatch::new(Array2::from_elem((1, 1), x), array![y], idx).unwrap()
    }

    #[test]
    fn equal_weights_average() {
        // two 1-D linear batches with Hessian 1 and estimates 1, 3
        let mut state = WlseState::new(1, ModelKind::Linear);
        state.ingest(&scalar_batch(1.0, 1.0, 1)).unwrap();
        state.ingest(&scalar_batch(1.0, 3.0, 2)).unwrap();
        let theta = state.finalize().unwrap();
        assert!((theta[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hessian_weighted_average() {
        // Hessians (1, 3) with estimates (0, 4): (1*0 + 3*4) / 4 = 3
        let s3 = 3f64.sqrt();
        let mut state = WlseState::new(1, ModelKind::Linear);
        state.ingest(&scalar_batch(1.0, 0.0, 1)).unwrap();
        state.ingest(&scalar_batch(s3, 4.0 * s3, 2)).unwrap();
        assert!((state.hess_total()[[0, 0]] - 4.0).abs() < 1e-12);
        let theta = state.finalize().unwrap();
        assert!((theta[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_batch_equals_its_own_estimate() {
        let mut state = WlseState::new(1, ModelKind::Linear);
        state.ingest(&scalar_batch(2.0, 5.0, 1)).unwrap();
        let theta = state.finalize().unwrap();
        assert!((theta[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn separable_logistic_batch_is_skipped() {
        let mut state = WlseState::new(1, ModelKind::Logistic);
        state.ingest(&scalar_batch(1.0, 1.0, 1)).unwrap();
        assert_eq!(state.count(), 0);
        assert_eq!(state.skipped(), 1);
        // a balanced batch still goes through
        let balanced = SampleBatch::new(
            Array2::from_shape_vec((4, 1), vec![1.0, -1.0, 1.0, -1.0]).unwrap(),
            array![1.0, 0.0, 0.0, 1.0],
            2,
        )
        .unwrap();
        state.ingest(&balanced).unwrap();
        assert_eq!(state.count(), 1);
        let theta = state.finalize().unwrap();
        assert!(theta[0].abs() < 1e-6);
    }

    #[test]
    fn finalize_without_usable_batches_errors() {
        let state = WlseState::new(2, ModelKind::Linear);
        assert!(state.finalize().is_err());
    }
}
