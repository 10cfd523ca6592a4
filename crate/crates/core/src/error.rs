use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} is outside its domain ({expected})")]
    ParameterDomain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Cholesky factorization hit a non-positive pivot at leading minor `minor` (0-based).
    #[error("matrix is not positive definite (leading minor {minor} has pivot {pivot:e})")]
    NotPositiveDefinite { minor: usize, pivot: f64 },

    #[error("sampler failed at iteration {iteration} in group {group}: {source}")]
    SamplerFailure {
        iteration: usize,
        group: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("positive-definite repair failed: smallest eigenvalue {min_eigenvalue:e}")]
    RepairFailure { min_eigenvalue: f64 },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("{path}: line {line}: {message}")]
    Ingestion {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable tag, used by the CLI error line and the C API.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ParameterDomain { .. } => "parameter-domain",
            Error::InvalidInput(_) => "invalid-input",
            Error::NotPositiveDefinite { .. } => "not-positive-definite",
            Error::SamplerFailure { .. } => "sampler-failure",
            Error::RepairFailure { .. } => "repair-failure",
            Error::Unsupported(_) => "unsupported",
            Error::Ingestion { .. } => "ingestion",
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
        }
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::ParameterDomain {
            name,
            value,
            expected: "finite and > 0",
        })
    }
}
