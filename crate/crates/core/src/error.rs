use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The Newton iteration of an implicit Euler step did not converge.
    #[error("implicit Euler step {step}{} failed: Newton residual {residual:e} after {iterations} iterations", trajectory.map(|t| format!(" of trajectory {t}")).unwrap_or_default())]
    StepFailure {
        /// Position of the trajectory in the initial grid, when known.
        trajectory: Option<usize>,
        step: usize,
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("dimension mismatch: {what} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        what: String,
        got: usize,
        expected: usize,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("fit failed (condition estimate {condition:e}): {reason}; consider increasing lambda")]
    FitFailure { condition: f64, reason: String },

    #[error("Taylor oracle: degree-{degree} matching system is singular")]
    OracleFailure { degree: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_dim(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::DimensionMismatch {
            what: what.into(),
            got,
            expected,
        });
    }
    Ok(())
}
