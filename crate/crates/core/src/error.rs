use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{module}: invalid parameter `{name}`: {reason}")]
    Parameter {
        module: &'static str,
        name: &'static str,
        reason: String,
    },

    #[error("{module}: insufficient data: {reason}")]
    InsufficientData { module: &'static str, reason: String },

    #[error("numerics: {0}")]
    Numerical(String),

    #[error("corpus: record `{record}`: {reason}")]
    Format { record: String, reason: String },

    #[error("corpus: malformed manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error("oodgen: {0}")]
    Generation(String),

    #[error("train: diverged at epoch {epoch}, batch {batch}: {reason}")]
    Divergence {
        epoch: usize,
        batch: usize,
        reason: String,
    },

    #[error("metrics: undefined: {0}")]
    UndefinedMetric(String),

    #[error("heads_losses: contract violation: {0}")]
    Contract(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(module: &'static str, name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            module,
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
