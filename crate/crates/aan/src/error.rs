//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes incompatible with the requested operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Invalid configuration value (window size, rates, spec bounds, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A documented operation contract was violated at runtime.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Corpus file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A loss component became non-finite during training.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Checkpoint does not match the corpus it is applied to.
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
