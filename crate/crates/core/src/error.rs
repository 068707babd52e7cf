//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (dimensions, hyperparameters, field lists).
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or out-of-contract input data (CSV rows, id ranges, headers).
    #[error("data error: {0}")]
    Data(String),

    /// Shape mismatch between tensors, layers, or schema-derived widths.
    #[error("shape error: {0}")]
    Shape(String),

    /// A metric could not be computed on the given inputs.
    #[error("metric error: {0}")]
    Metric(String),

    /// Corrupt, truncated, or incompatible checkpoint file.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
    pub fn metric(msg: impl Into<String>) -> Self {
        Error::Metric(msg.into())
    }
    pub fn checkpoint(msg: impl Into<String>) -> Self {
        Error::Checkpoint(msg.into())
    }
}
