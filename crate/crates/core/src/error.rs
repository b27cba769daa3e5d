use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Off-diagonal kernel mass of a weight-matrix row vanished.
    #[error("row {row} of the weight matrix has zero off-diagonal kernel mass")]
    DegenerateRow { row: usize },

    #[error("statistic undefined: {0}")]
    UndefinedStatistic(String),

    #[error("reduction needs at least two clusters, got {0}")]
    DegenerateReduction(usize),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("non-finite Jacobian entry at step {step}, coordinate {coordinate}")]
    NonFiniteJacobian { step: usize, coordinate: usize },

    #[error("reference trajectory diverged at cognition level {level}")]
    Divergence { level: usize },

    #[error("nothing to plot: {0}")]
    EmptyInput(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Scenario {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("plot: {0}")]
    Plot(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Wraps an error with a description of the scenario that produced it.
    pub fn in_scenario(self, context: impl Into<String>) -> Self {
        Error::Scenario {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
