//! Error types shared across the crate.

use thiserror::Error;

/// Errors from transport maps, training, targets, and samplers.
#[derive(Debug, Error)]
pub enum TrjError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite input at coordinate {index}")]
    NonFiniteInput { index: usize },

    /// The input lies outside the map's domain, e.g. the sigmoid sandwich of
    /// a spline flow saturated, or a log transform received a non-positive
    /// coordinate. Proposals hitting this are rejected, never NaN.
    #[error("input outside map domain: {0}")]
    OutsideDomain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Cholesky factorization failed; `pivot` is the offending diagonal
    /// index and `value` the non-positive pivot encountered there.
    #[error("matrix not positive definite: pivot {pivot} has value {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("training failed: {0}")]
    Training(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),

    #[error("csv error: {0}")]
    Csv(String),
}

/// Errors specific to model-probability estimation.
#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("no proposals recorded for model pair {from} -> {to}")]
    MissingPair { from: usize, to: usize },

    /// Every forward acceptance probability was zero, so the ratio estimator
    /// is undefined rather than silently infinite.
    #[error("all acceptance probabilities for pair {from} -> {to} are zero")]
    ZeroAcceptance { from: usize, to: usize },

    #[error("estimate for pair {from} -> {to} is not finite or not positive")]
    NonFiniteEstimate { from: usize, to: usize },

    #[error("invalid pivot model {0}")]
    InvalidPivot(usize),
}

pub type Result<T> = std::result::Result<T, TrjError>;
