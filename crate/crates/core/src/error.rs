use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error on line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("dataset contains no samples")]
    EmptyDataset,

    #[error("invalid sample {id}: {message}")]
    InvalidSample { id: String, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("channel {channel} has no support for interpolation")]
    NoSupport { channel: usize },

    #[error("{0}")]
    Metric(String),

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
