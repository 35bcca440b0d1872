use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("graph must have at least one node")]
    EmptyGraph,

    #[error("node index {index} out of range for a graph with {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },

    #[error("graph is not strongly connected")]
    NotStronglyConnected,

    #[error("graph is not symmetric (edge {0} -> {1} has no reverse)")]
    NotSymmetric(usize, usize),

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not column-stochastic: column {column} sums to {sum}")]
    NotColumnStochastic { column: usize, sum: f64 },

    #[error("matrix is not symmetric: max asymmetry {0:e}")]
    NotSymmetricMatrix(f64),

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("rank-deficient data after {0} generation attempts")]
    RankDeficient(usize),

    #[error("iterate diverged at iteration {0}")]
    Diverged(usize),

    #[error("non-positive series entry {value} at index {index}")]
    NonPositive { index: usize, value: f64 },

    #[error("series too short: {len} entries after burn-in, need at least {min}")]
    SeriesTooShort { len: usize, min: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, value: f64, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
