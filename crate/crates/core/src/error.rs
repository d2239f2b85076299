use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric within {tol:e} (max asymmetry {asym:e})")]
    NotSymmetric { tol: f64, asym: f64 },

    #[error("power iteration did not converge within {iters} iterations (residual {residual:e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sample {index} has a zero-norm input vector")]
    ZeroNormInput { index: usize },

    #[error("{path}: wrong magic 0x{found:08x}, expected 0x{expected:08x}")]
    WrongMagic { path: PathBuf, found: u32, expected: u32 },

    #[error("{path}: file truncated ({detail})")]
    Truncated { path: PathBuf, detail: String },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("non-finite field value at step {step}")]
    NonFinite { step: usize },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
