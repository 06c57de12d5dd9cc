use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, channel counts or hyperparameters that cannot work together.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data that violates an operation's preconditions.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unsupported format or version: {0}")]
    Version(String),

    #[error("scene generation failed: {0}")]
    Generation(String),

    /// Non-finite loss during training.
    #[error("numerical abort at epoch {epoch}, batch {batch} (samples {samples:?}): {message}")]
    Numerical {
        epoch: usize,
        batch: usize,
        samples: Vec<String>,
        message: String,
    },

    /// Misuse of the autodiff tape.
    #[error("tape error: {0}")]
    Tape(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Numerical { .. } => 4,
            Error::Config(_)
            | Error::Input(_)
            | Error::Parse { .. }
            | Error::Validation(_)
            | Error::Version(_)
            | Error::Generation(_) => 3,
            Error::Tape(_) | Error::Internal(_) => 4,
        }
    }
}

macro_rules! config_err {
    ($($arg:tt)*) => { $crate::error::Error::Config(format!($($arg)*)) };
}
pub(crate) use config_err;
