use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("invalid pattern for {label}: {message}")]
    Pattern { label: String, message: String },

    #[error("event for {user_id}/{app_id} at {timestamp} precedes last seen timestamp {last}")]
    OutOfOrder {
        user_id: String,
        app_id: String,
        timestamp: i64,
        last: i64,
    },

    #[error("entry buffer is empty")]
    EmptyBuffer,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("user sets differ; unmatched ids: {0:?}")]
    UserMismatch(Vec<String>),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
