//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while building, fitting or summarising a model.
///
/// Variants split into two families: input problems (bad files, bad
/// configuration, invalid arguments) and numerical failures. The CLI maps
/// the first family to exit code 2 and the second to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {message}")]
    Validation { path: PathBuf, message: String },

    #[error("configuration: {0}")]
    Config(String),

    #[error("chain file {path}: {message}")]
    ChainFormat { path: PathBuf, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
