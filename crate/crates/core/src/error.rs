use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient frames: need at least 2, got {0}")]
    InsufficientFrames(usize),

    #[error("non-monotonic timestamps at frame {index}: {prev} -> {next}")]
    NonMonotonicTimestamps { index: usize, prev: u64, next: u64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("event format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("event {index} at t={t} lies outside [{t_start}, {t_end}]")]
    EventOutOfRange {
        index: usize,
        t: u64,
        t_start: u64,
        t_end: u64,
    },

    #[error("stale state; reset required ({0})")]
    StaleState(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("non-finite loss at step {step}; batch dump written to {dump}")]
    NonFiniteLoss { step: usize, dump: PathBuf },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
