use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("H-infinity norm undefined: closed loop is not Schur stable")]
    UnstableClosedLoop,

    #[error("uncertainty set is unbounded")]
    UnboundedUncertainty,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("empty uncertainty set: {0}")]
    EmptyUncertainty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
