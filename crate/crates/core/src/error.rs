use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, hyperparameters or file contents that do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    /// A value outside the domain of a numeric operation (log of a non-positive
    /// number, non-finite logits, ...).
    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    /// The API was called in a way its contract forbids.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("ingestion error at row {row}, column '{column}': {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("Cox fit did not converge after {iterations} iterations (gradient max-norm {grad_norm:.3e})")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        beta: Vec<f64>,
    },

    #[error("non-finite loss in epoch {epoch}, batch {batch} (last finite loss {last_finite:?})")]
    NanLoss {
        epoch: usize,
        batch: usize,
        last_finite: Option<f64>,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 2 for usage/configuration problems, 1 for runtime
    /// and numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) | Error::Ingestion { .. } | Error::Format { .. } => 2,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
