use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate tweet id {0:?}")]
    DuplicateId(String),

    #[error("{}: file contains no records", .0.display())]
    EmptyInput(PathBuf),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no vector for document {0:?}")]
    MissingVector(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("cannot mix sparse and dense vectors")]
    RepresentationMismatch,

    #[error("document {0:?} has a gold label but no cluster assignment")]
    MissingAssignment(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// Coarse classification of errors, used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input data or parameters.
    Validation,
    /// A file or lookup target does not exist.
    MissingResource,
    /// Internal consistency check failed.
    Internal,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn malformed(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } | Error::MissingVector(_) => ErrorKind::MissingResource,
            Error::Invariant(_) => ErrorKind::Internal,
            _ => ErrorKind::Validation,
        }
    }
}
