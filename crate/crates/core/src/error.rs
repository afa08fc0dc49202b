use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed CSV: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("schema error: missing column `{column}`")]
    MissingColumn { column: String },

    #[error("validation error in region `{id}`: {reason}")]
    Validation { id: String, reason: String },

    #[error("dataset contains no regions")]
    EmptyDataset,

    #[error("coordinate out of range for region `{id}`: {reason}")]
    Range { id: String, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate economy: {0}")]
    Degenerate(String),

    #[error("short-run solver did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        last_wages: Vec<f64>,
    },

    #[error("short-run failure at t = {time}: {source}")]
    Integration {
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario `{name}`: {source}")]
    Scenario {
        name: String,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Process exit code: 1 validation, 2 convergence failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Csv { .. } => 3,
            Error::Convergence { .. } => 2,
            Error::Integration { source, .. } | Error::Scenario { source, .. } => {
                source.exit_code()
            }
            _ => 1,
        }
    }
}
