use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    #[error(transparent)]
    Core(#[from] morphspan_core::Error),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        CliError::Io { path: path.as_ref().to_path_buf(), source }
    }

    /// 1 for bad input, 2 when the filesystem let us down.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Core(morphspan_core::Error::Io(_)) => 2,
            _ => 1,
        }
    }

    /// Prefixes a core error with the file or record it came from.
    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            CliError::Core(morphspan_core::Error::Io(e)) => CliError::Io { path: PathBuf::from(what.to_string()), source: e },
            CliError::Io { path, source } => CliError::Io { path, source },
            other => CliError::Validation(format!("{what}: {other}")),
        }
    }
}

pub trait Context<T> {
    fn context(self, what: impl std::fmt::Display) -> CliResult<T>;
}

impl<T, E: Into<CliError>> Context<T> for Result<T, E> {
    fn context(self, what: impl std::fmt::Display) -> CliResult<T> {
        self.map_err(|e| e.into().context(what))
    }
}
