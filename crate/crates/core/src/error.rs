use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("out of bounds: {0}")]
    Bounds(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("config error: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("undefined metric [{metric}]: {reason}")]
    UndefinedMetric { metric: &'static str, reason: String },

    #[error("{path}: bad field `{field}`: {message}")]
    Format {
        path: PathBuf,
        field: &'static str,
        message: String,
    },

    #[error("non-finite loss at step {step}; batch: {batch}")]
    NonFiniteLoss { step: u64, batch: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Yaml(#[from] serde_yaml::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
