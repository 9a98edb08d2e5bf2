use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: empty file")]
    EmptyFile { path: PathBuf },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("window of length {window} does not fit in range of length {range}")]
    WindowTooLong { window: usize, range: usize },

    #[error("length {len} is not divisible by compression factor {factor}")]
    NotDivisible { len: usize, factor: usize },

    #[error("token index {index} out of range for codebook of size {size}")]
    TokenOutOfRange { index: usize, size: usize },

    #[error("non-finite {component} loss ({value}) at step {step}")]
    NonFiniteLoss {
        component: &'static str,
        value: f64,
        step: usize,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("tables are misaligned; missing cells: {}", .0.join(", "))]
    Misaligned(Vec<String>),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
