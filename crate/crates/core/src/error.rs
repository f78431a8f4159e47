use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument or config value violated its documented domain.
    #[error("invalid value for `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("image size mismatch: {left:?} vs {right:?}")]
    SizeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    /// History from a previous frame no longer matches the cloud buffer, which
    /// happens when the scene config changes mid-sequence.
    #[error("history resolution {history:?} does not match cloud buffer {buffer:?}")]
    HistoryMismatch {
        history: (usize, usize),
        buffer: (usize, usize),
    },

    #[error("camera path has {got} poses but {expected} frames were requested")]
    CameraPathLength { expected: usize, got: usize },

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("experiment `{name}`: {message}")]
    Experiment { name: String, message: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for errors caused by bad input configuration rather than by the
    /// runtime environment.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. } | Error::Config { .. } | Error::CameraPathLength { .. }
        )
    }
}
