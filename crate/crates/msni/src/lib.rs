//! Streaming M-estimation over heterogeneous batch streams.
//!
//! A stream delivers `K` batches whose true parameters jitter around a shared
//! target. The estimators here process each batch once: the multi-stage
//! Newton iteration accumulates per-batch mean gradients and Hessians
//! (evaluated at the stage estimate current on arrival) and refines the
//! estimate at geometrically spaced batch counts `floor(K^alpha_t)`, so the
//! cost of matrix inversions shrinks as the stream grows while the final
//! estimate matches full-data rates. One-stage iteration, a Hessian-weighted
//! combination of per-batch fits, a regularized continual-learning update,
//! and a sequential-MLE forgetting baseline ride the same stream interface
//! for comparison, with a pooled full-data oracle as the reference point.
//!
//! On top of the estimators sit plug-in sandwich variance estimates with
//! confidence intervals and coverage experiments, continual-learning
//! accuracy metrics, seeded synthetic stream generators, and a config-driven
//! experiment harness with a CLI (`simulate`, `coverage`, `real-data`,
//! `dump-stream`, `metrics`).

pub mod error;
pub mod estimators;
pub mod harness;
pub mod inference;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod rng;
pub mod schedule;
pub mod sim;
pub mod stream;

pub use error::{Error, Result};
pub use loss::{ModelKind, SampleBatch};
pub use schedule::StageSchedule;
