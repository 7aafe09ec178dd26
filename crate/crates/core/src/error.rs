use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("value out of domain: {0}")]
    Domain(String),

    /// A non-finite value appeared; `step` is the first offending timestep
    /// (or integration step).
    #[error("numerical divergence at step {step}")]
    Divergence { step: usize },

    #[error("training diverged at epoch {epoch}, batch {batch}: {source}")]
    TrainingDivergence {
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("trajectory integrity: {0}")]
    Integrity(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("parse error in {context}, line {line}: {message}")]
    Parse {
        context: String,
        line: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient data: need at least {needed} positive entries, found {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Divergence { .. } | Error::TrainingDivergence { .. })
    }

    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Format { .. } | Error::Parse { .. } | Error::Io { .. } | Error::Integrity(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}
