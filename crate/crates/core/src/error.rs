//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by dataset handling, model math, and training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: parse error: {message}")]
    ManifestParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invariant violation in field `{field}`: {message}")]
    Invariant { field: String, message: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {message}")]
    ShapeMismatch { message: String },

    #[error("{what} must not be empty")]
    Empty { what: String },

    #[error("invalid argument `{name}`: {message}")]
    InvalidArgument { name: String, message: String },

    #[error("image error for {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("training diverged (non-finite loss) at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invariant(field: &str, message: impl Into<String>) -> Self {
        Error::Invariant {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn invalid(name: &str, message: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name: name.to_string(),
            message: message.into(),
        }
    }

    pub fn empty(what: &str) -> Self {
        Error::Empty {
            what: what.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
