use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not fit the operation.
    #[error("dimension error in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// Caller violated an operation contract (e.g. backward from a non-scalar).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Bad input data: unknown characters, out-of-range ids, too-short streams.
    #[error("input error: {0}")]
    Input(String),

    /// Invalid configuration values.
    #[error("config error: {0}")]
    Config(String),

    /// A persisted file does not match the expected layout.
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    /// An operation needs a complete sweep but some cells are missing.
    #[error("incomplete sweep: {missing} of {total} cells missing (first missing: {first:?})")]
    Incomplete {
        missing: usize,
        total: usize,
        first: Vec<(usize, usize)>,
    },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
