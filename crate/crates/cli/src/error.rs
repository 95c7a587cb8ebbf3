use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mintood::Error),

    #[error("cli: config {path}: {reason}")]
    Config { path: PathBuf, reason: String },

    #[error("cli: invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("cli: malformed table {path}: {reason}")]
    Table { path: PathBuf, reason: String },

    #[error("cli: io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        CliError::Parameter {
            name,
            reason: reason.into(),
        }
    }
}
