//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed annotation input; `line` is 1-based within the offending file.
    #[error("parse error in {file} line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    /// Inconsistent corpus after parsing (missing labels, coder counts, ...).
    #[error("corpus error: {0}")]
    Corpus(String),

    /// Invalid generator or training configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Tensor or layer shape disagreement.
    #[error("shape error: {0}")]
    Shape(String),

    /// Non-finite loss or gradient during training.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Model kind does not match the requested operation.
    #[error("model error: {0}")]
    Model(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Corpus(_) => "corpus",
            Error::Config(_) => "config",
            Error::Shape(_) => "shape",
            Error::Numeric(_) => "numeric",
            Error::Model(_) => "model",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
