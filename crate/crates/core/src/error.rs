use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented shape or value invariant.
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("corrupt manifest in {path}: {reason}")]
    CorruptManifest { path: PathBuf, reason: String },

    #[error("truncated payload in {path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("payload size mismatch in {path}: manifest declares {expected} bytes, file holds {found}")]
    PayloadMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("audio error: {0}")]
    Audio(String),

    #[error("optimization diverged: {reason} ({} losses recorded)", trace.len())]
    Divergence { reason: String, trace: Vec<f64> },

    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse grouping used by the command-line front end to pick exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Data,
    Numeric,
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn dims(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::DimMismatch {
            context: context.into(),
            expected,
            actual,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Divergence { .. } | Error::NonFinite { .. } => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }
}

pub(crate) fn ensure_dim(context: &str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::dims(context, expected, actual))
    }
}
