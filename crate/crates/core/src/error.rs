use thiserror::Error;

/// Errors raised by the simulation and verification routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("duplicate point at positions {first} and {second}")]
    DuplicatePoint { first: usize, second: usize },

    #[error("gram matrix is not positive semidefinite (tolerance {tolerance:e})")]
    NotPositiveSemidefinite { tolerance: f64 },

    #[error("cholesky factorization failed after jitter escalation up to {max_jitter:e}")]
    FactorizationFailed { max_jitter: f64 },

    #[error("net has {count} points, above the cap of {cap}; lower T or coarsen the mesh")]
    PointCapExceeded { count: usize, cap: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("zero persistence estimate at T = {t}; increase N or lower T")]
    ZeroProbability { t: f64 },

    #[error("need >= 3 scales, got {0}")]
    TooFewScales(usize),

    #[error("curve construction cannot satisfy step bound {0}")]
    StepBound(u32),

    #[error("insufficient tail hits: {0}")]
    InsufficientTail(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
