use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the denoising pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },

    #[error("training diverged: {0}")]
    Training(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Io {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
