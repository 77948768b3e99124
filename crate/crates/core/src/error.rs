use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no observations")]
    NoObservations,

    #[error("{algorithm} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        algorithm: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("rank-deficient basis: vector {index} is linearly dependent on its predecessors")]
    RankDeficient { index: usize },

    #[error("not an orthogonal projector: {0}")]
    NotProjector(String),

    #[error("line {line}: {message}")]
    Data { line: u64, message: String },

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Coarse failure class, used by the command-line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_) => ErrorKind::Config,
            Error::DimensionMismatch { .. }
            | Error::NoObservations
            | Error::Data { .. }
            | Error::Snapshot(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::Io(_) => ErrorKind::Data,
            Error::NonFinite(_)
            | Error::NoConvergence { .. }
            | Error::RankDeficient { .. }
            | Error::NotProjector(_) => ErrorKind::Numerical,
        }
    }

    pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, found })
        }
    }
}
