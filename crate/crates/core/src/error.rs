use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the training engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{0}: no interactions")]
    NoInteractions(PathBuf),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("id {id} out of range for {what} (size {size})")]
    OutOfRange {
        what: &'static str,
        id: usize,
        size: usize,
    },

    #[error("target user {0} has no source-domain identity")]
    NotOverlapping(usize),

    #[error("gain module requires overlap")]
    NoOverlap,

    #[error("degenerate losses: group average {0} is not positive")]
    DegenerateLosses(f64),

    #[error("group {0} has no recorded loss in the first epoch")]
    EmptyGroup(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parameter partition violated: {0}")]
    Contract(String),

    #[error("snapshot format: {0}")]
    Snapshot(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
