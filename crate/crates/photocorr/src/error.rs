use std::io;
use std::path::PathBuf;

use photocorr_core::Error as CoreError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    /// Unrecognized magic, version or flags.
    #[error("format error: {0}")]
    Format(String),
    /// The byte stream ends early or carries extra bytes.
    #[error("corrupt stack: {0}")]
    Corruption(String),
    /// Well-formed bytes that violate a stack invariant.
    #[error("invalid stack: {0}")]
    Validation(String),
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    /// The data do not support the requested analysis.
    #[error("{0}")]
    Analysis(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Broad failure classes, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Validation,
    Capability,
    Runtime,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Usage(_) => ErrorClass::Usage,
            Error::Format(_)
            | Error::Corruption(_)
            | Error::Validation(_)
            | Error::Config { .. } => ErrorClass::Validation,
            Error::Core(e) => match e {
                CoreError::Capability(_) | CoreError::Mode { .. } => ErrorClass::Capability,
                CoreError::Parameter(_)
                | CoreError::Configuration(_)
                | CoreError::UndefinedRatio { .. }
                | CoreError::ZeroMean => ErrorClass::Validation,
                _ => ErrorClass::Runtime,
            },
            Error::Io(_) | Error::File { .. } | Error::Csv(_) | Error::Analysis(_) => {
                ErrorClass::Runtime
            }
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
