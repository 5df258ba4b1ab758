use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("time {t} lies outside [0, {tau}]")]
    TimeOutOfRange { t: f64, tau: f64 },
    #[error("invalid observation {index}: {reason}")]
    InvalidObservation { index: usize, reason: String },
    #[error("empty cohort")]
    EmptyCohort,
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("linear predictor magnitude {value:.3e} exceeds the overflow guard {limit}")]
    Overflow { value: f64, limit: f64 },
    #[error("quadrature: {0}")]
    Quadrature(String),
    #[error("dimension {dim} with sparsity {s} exceeds the enumeration guard (dim <= {max_dim}, s <= {max_s}); use the eigenvalue lower bound")]
    EnumerationGuard {
        dim: usize,
        s: usize,
        max_dim: usize,
        max_s: usize,
    },
    #[error("csv row {row}: {reason}")]
    Csv { row: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
