use std::fmt;
use std::process::ExitCode;

use fsd_stream::ErrorKind;

/// Failure of a command, carrying its exit status.
#[derive(Debug)]
pub struct AppError {
    pub kind: ErrorKind,
    pub message: String,
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    pub fn validation(message: impl Into<String>) -> Self {
        AppError {
            kind: ErrorKind::Validation,
            message: message.into(),
        }
    }

    pub fn missing(message: impl Into<String>) -> Self {
        AppError {
            kind: ErrorKind::MissingResource,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        AppError {
            kind: ErrorKind::Internal,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self.kind {
            ErrorKind::Validation => 1,
            ErrorKind::MissingResource => 2,
            ErrorKind::Internal => 3,
        })
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<fsd_stream::Error> for AppError {
    fn from(e: fsd_stream::Error) -> Self {
        AppError {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}
