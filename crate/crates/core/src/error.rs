//! Error type shared by the library and the CLI.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent run configuration / input files.
    #[error("configuration error: {0}")]
    Config(String),
    /// A parameter violates a model precondition (λ ≤ 0, β ≤ 0, t < 0, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// Operator dimensions do not match.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// Operation not defined for the requested geometry (e.g. position on a torus).
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    /// A site index falls outside the box or on its boundary.
    #[error("site out of range: {0}")]
    OutOfRange(String),
    /// Eigensolver failure or a matrix that fails its structural checks.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A model assumption does not hold (degenerate bands, covariance out of [0, 1]).
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn config_at(line: usize, msg: impl std::fmt::Display) -> Self {
        Error::Config(format!("line {line}: {msg}"))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
