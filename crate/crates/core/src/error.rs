use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("format error in {path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl std::fmt::Display, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_string(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidInput(_) | Error::Format { .. } | Error::Validation(_) | Error::Shape(_) | Error::UndefinedMetric(_)
        )
    }
}

pub(crate) fn shape_check(ok: bool, what: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Shape(what()))
    }
}
