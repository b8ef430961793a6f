//! Twice-differentiable loss contract and its two concrete models.
//!
//! A [`SampleBatch`] is one block of the stream: an `n_k x p` feature matrix
//! with its response vector. Losses are always *batch means*, i.e.
//! `(1/n_k) * sum_i l(x_i, y_i, theta)`, so downstream accumulators operate on
//! per-batch mean gradients and Hessians regardless of batch size.
//!
//! Two models are provided:
//! - linear squared loss `(y - x'theta)^2 / 2`, whose Hessian `X'X / n` does
//!   not depend on `theta`;
//! - logistic log-loss `log(1 + exp(x'theta)) - y * x'theta`, evaluated in the
//!   overflow-safe form `log1p(exp(-|z|)) + max(z, 0) - y*z` since `|x'theta|`
//!   can exceed 700 during early iterations.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which regression model the stream follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Logistic,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Linear => write!(f, "linear"),
            ModelKind::Logistic => write!(f, "logistic"),
        }
    }
}

/// One batch of the data stream: `n_k` observations of dimension `p`.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    features: Array2<f64>,
    responses: Array1<f64>,
    batch_index: usize,
}

impl SampleBatch {
    /// Validates shapes and finiteness. `batch_index` is 1-based.
    pub fn new(features: Array2<f64>, responses: Array1<f64>, batch_index: usize) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::InvalidInput("batch must contain at least one sample".into()));
        }
        if responses.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: responses.len(),
                context: "responses per batch",
            });
        }
        if batch_index == 0 {
            return Err(Error::InvalidInput("batch_index is 1-based".into()));
        }
        if features.iter().any(|v| !v.is_finite()) || responses.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "batch {batch_index} contains non-finite entries"
            )));
        }
        Ok(Self { features, responses, batch_index })
    }

    pub fn num_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn batch_index(&self) -> usize {
        self.batch_index
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn responses(&self) -> &Array1<f64> {
        &self.responses
    }

    fn check_theta(&self, theta: ArrayView1<'_, f64>) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: theta.len(),
                context: "parameter vector vs batch features",
            });
        }
        Ok(())
    }

    fn check_binary_responses(&self) -> Result<()> {
        if self.responses.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::InvalidInput(format!(
                "batch {} has non-binary responses under the logistic model",
                self.batch_index
            )));
        }
        Ok(())
    }
}

/// Numerically stable `1 / (1 + exp(-z))`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z)) - y*z` without overflow.
fn logistic_sample_loss(z: f64, y: f64) -> f64 {
    (-z.abs()).exp().ln_1p() + z.max(0.0) - y * z
}

/// Batch-mean loss `L_k(theta)`.
pub fn loss_value(batch: &SampleBatch, kind: ModelKind, theta: ArrayView1<'_, f64>) -> Result<f64> {
    batch.check_theta(theta)?;
    let n = batch.num_samples();
    let z = batch.features.dot(&theta);
    let total = match kind {
        ModelKind::Linear => z
            .iter()
            .zip(batch.responses.iter())
            .map(|(&zi, &yi)| {
                let r = yi - zi;
                0.5 * r * r
            })
            .sum::<f64>(),
        ModelKind::Logistic => {
            batch.check_binary_responses()?;
            z.iter()
                .zip(batch.responses.iter())
                .map(|(&zi, &yi)| logistic_sample_loss(zi, yi))
                .sum::<f64>()
        }
    };
    Ok(total / n as f64)
}

/// Batch-mean gradient of `L_k` at `theta`.
pub fn loss_gradient(
    batch: &SampleBatch,
    kind: ModelKind,
    theta: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    batch.check_theta(theta)?;
    let n = batch.num_samples();
    let p = batch.dim();
    let z = batch.features.dot(&theta);
    let mut grad = Array1::<f64>::zeros(p);
    match kind {
        ModelKind::Linear => {
            for i in 0..n {
                let resid = z[i] - batch.responses[i];
                let row = batch.features.row(i);
                for j in 0..p {
                    grad[j] += row[j] * resid;
                }
            }
        }
        ModelKind::Logistic => {
            batch.check_binary_responses()?;
            for i in 0..n {
                let resid = sigmoid(z[i]) - batch.responses[i];
                let row = batch.features.row(i);
                for j in 0..p {
                    grad[j] += row[j] * resid;
                }
            }
        }
    }
    grad.mapv_inplace(|v| v / n as f64);
    Ok(grad)
}

/// Batch-mean Hessian of `L_k` at `theta`. The result is exactly symmetric:
/// the upper triangle is accumulated and mirrored. For the linear model the
/// computation never reads `theta`, so the output is bitwise identical for
/// any parameter value.
pub fn loss_hessian(
    batch: &SampleBatch,
    kind: ModelKind,
    theta: ArrayView1<'_, f64>,
) -> Result<Array2<f64>> {
    batch.check_theta(theta)?;
    let weights = hessian_weights(batch, kind, theta)?;
    Ok(weighted_cross_moment(batch, weights.as_deref()))
}

/// Batch-mean gradient and Hessian in one pass; the streaming estimators call
/// this per batch so the logistic link is evaluated once.
pub fn loss_gradient_hessian(
    batch: &SampleBatch,
    kind: ModelKind,
    theta: ArrayView1<'_, f64>,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let grad = loss_gradient(batch, kind, theta)?;
    let hess = loss_hessian(batch, kind, theta)?;
    Ok((grad, hess))
}

/// Per-sample curvature weights; `None` means unit weights (linear model).
fn hessian_weights(
    batch: &SampleBatch,
    kind: ModelKind,
    theta: ArrayView1<'_, f64>,
) -> Result<Option<Vec<f64>>> {
    match kind {
        ModelKind::Linear => Ok(None),
        ModelKind::Logistic => {
            batch.check_binary_responses()?;
            let z = batch.features.dot(&theta);
            Ok(Some(
                z.iter()
                    .map(|&zi| {
                        let s = sigmoid(zi);
                        s * (1.0 - s)
                    })
                    .collect(),
            ))
        }
    }
}

/// `(1/n) * sum_i w_i x_i x_i^T`, upper triangle mirrored for exact symmetry.
fn weighted_cross_moment(batch: &SampleBatch, weights: Option<&[f64]>) -> Array2<f64> {
    let n = batch.num_samples();
    let p = batch.dim();
    let mut h = Array2::<f64>::zeros((p, p));
    for i in 0..n {
        let w = weights.map_or(1.0, |ws| ws[i]);
        let row = batch.features.row(i);
        for j1 in 0..p {
            let wx = w * row[j1];
            for j2 in j1..p {
                h[[j1, j2]] += wx * row[j2];
            }
        }
    }
    let scale = 1.0 / n as f64;
    for j1 in 0..p {
        for j2 in j1..p {
            let v = h[[j1, j2]] * scale;
            h[[j1, j2]] = v;
            h[[j2, j1]] = v;
        }
    }
    h
}

/// `(1/n) * sum_i l_dot_i l_dot_i^T`: mean outer product of per-sample score
/// vectors, used by the homogeneous-mode variance estimator.
pub fn score_outer_mean(
    batch: &SampleBatch,
    kind: ModelKind,
    theta: ArrayView1<'_, f64>,
) -> Result<Array2<f64>> {
    batch.check_theta(theta)?;
    let n = batch.num_samples();
    let p = batch.dim();
    let z = batch.features.dot(&theta);
    let mut g = Array2::<f64>::zeros((p, p));
    if kind == ModelKind::Logistic {
        batch.check_binary_responses()?;
    }
    for i in 0..n {
        let resid = match kind {
            ModelKind::Linear => z[i] - batch.responses[i],
            ModelKind::Logistic => sigmoid(z[i]) - batch.responses[i],
        };
        let w = resid * resid;
        let row = batch.features.row(i);
        for j1 in 0..p {
            let wx = w * row[j1];
            for j2 in j1..p {
                g[[j1, j2]] += wx * row[j2];
            }
        }
    }
    let scale = 1.0 / n as f64;
    for j1 in 0..p {
        for j2 in j1..p {
            let v = g[[j1, j2]] * scale;
            g[[j1, j2]] = v;
            g[[j2, j1]] = v;
        }
    }
    Ok(g)
}
