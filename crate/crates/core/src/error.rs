use std::io;

use thiserror::Error;

/// Errors raised anywhere in the training stack.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or lengths disagree with a policy spec or with each other.
    #[error("structural error: {0}")]
    Structure(String),
    /// A caller-supplied value is out of its domain (non-finite, negative, ...).
    #[error("invalid input: {0}")]
    Input(String),
    /// Configuration rejected before any compute starts.
    #[error("validation error: {0}")]
    Validation(String),
    /// Malformed checkpoint, archive, config or log file.
    #[error("format error: {0}")]
    Format(String),
    /// Master/worker protocol violation.
    #[error("protocol error: {0}")]
    Protocol(String),
    /// Evaluation results could not be combined into an update.
    #[error("aggregation error: {0}")]
    Aggregation(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors the CLI reports with the validation exit code.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::Format(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn structure(msg: impl Into<String>) -> Error {
    Error::Structure(msg.into())
}

pub(crate) fn input(msg: impl Into<String>) -> Error {
    Error::Input(msg.into())
}

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

pub(crate) fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}
