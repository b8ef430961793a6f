//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by estimation, simulation, and the experiment harness.
#[derive(Error, Debug)]
pub enum Error {
    /// A vector or matrix dimension does not match its counterpart.
    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    /// Invalid argument or malformed data.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A stage schedule violates the exponent or boundary constraints.
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    /// A linear system stayed singular even after the ridge guard.
    #[error("singular system: {0}")]
    SingularSystem(String),

    /// Newton iterations exhausted without meeting the gradient tolerance,
    /// or the iterates escaped (e.g. complete separation in logistic fits).
    /// Carries the last iterate so callers can inspect or salvage it.
    #[error("newton solver did not converge after {iterations} iterations (gradient norm {grad_norm:.3e}): {reason}")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        reason: String,
        last_iterate: Vec<f64>,
    },

    /// Experiment configuration rejected during validation.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input file (CSV or binary feature dump).
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
