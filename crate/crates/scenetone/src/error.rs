use std::io;
use std::path::{Path, PathBuf};

use scenetone_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Validation(String),
    #[error("{context}: {path}: {source}")]
    Io {
        context: String,
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{context}: {path}: {message}")]
    Format { context: String, path: PathBuf, message: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: CoreError,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(context: impl Into<String>, path: &Path, source: io::Error) -> Self {
        Self::Io { context: context.into(), path: path.to_path_buf(), source }
    }

    pub fn format(context: impl Into<String>, path: &Path, message: impl ToString) -> Self {
        Self::Format { context: context.into(), path: path.to_path_buf(), message: message.to_string() }
    }

    /// Prepends `prefix` to the message, e.g. the clip an error belongs to.
    pub fn prefixed(self, prefix: &str) -> Self {
        match self {
            Self::Validation(m) => Self::Validation(format!("{prefix}: {m}")),
            Self::Numeric(m) => Self::Numeric(format!("{prefix}: {m}")),
            Self::Io { context, path, source } => Self::Io { context: format!("{prefix}: {context}"), path, source },
            Self::Format { context, path, message } => {
                Self::Format { context: format!("{prefix}: {context}"), path, message }
            }
            Self::Core { context, source } => Self::Core { context: format!("{prefix}: {context}"), source },
        }
    }

    /// Process exit status: 2 validation, 3 I/O, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Io { .. } | Self::Format { .. } => 3,
            Self::Numeric(_) => 4,
            Self::Core { source, .. } => match source {
                CoreError::NonFinite(_) => 4,
                _ => 2,
            },
        }
    }
}

pub trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for std::result::Result<T, CoreError> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| Error::Core { context: what(), source })
    }
}
