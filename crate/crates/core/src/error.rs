use std::path::PathBuf;

use crate::model::ParamStore;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
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

    #[error("{0}")]
    Data(String),

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in `{tensor}` at index {index}")]
    NonFinite { tensor: String, index: usize },

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged {
        epoch: usize,
        last_good: Box<ParamStore>,
    },

    #[error("embedding service: {0}")]
    Network(String),

    #[error("{0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    /// Short machine-parsable category used in CLI error lines.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Data(_) => "data",
            Error::Config { .. } => "config",
            Error::Shape(_) => "shape",
            Error::NonFinite { .. } => "numeric",
            Error::Diverged { .. } => "diverged",
            Error::Network(_) => "network",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
