use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Core(#[from] ppf_core::Error),
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {msg}")]
    Format { path: PathBuf, line: u64, msg: String },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("vertex behind the camera")]
    BehindCamera,
    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;
