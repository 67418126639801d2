//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by the forecasting engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad dimensions, ranges, or config-file keys.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    /// An argument outside the operation's domain (index out of range, empty input).
    #[error("domain error: {0}")]
    Domain(String),

    /// Numeric failure during training (non-finite loss or gradient).
    #[error("training error: {0}")]
    Training(String),

    /// Numeric failure during reverse-process sampling.
    #[error("sampling error at diffusion step {step}: {message}")]
    Sampling { step: usize, message: String },

    /// Model artifact problems: version/shape mismatch, non-finite outputs.
    #[error("model error: {0}")]
    Model(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
