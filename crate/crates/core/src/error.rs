use thiserror::Error;

use crate::geom::{BranchId, SeedId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value outside the domain of an operation (negative time, bad angle, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Measure-zero input the simulator refuses to tie-break silently.
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("unknown seed id {0}")]
    UnknownSeed(SeedId),

    #[error("unknown branch {0}")]
    UnknownBranch(BranchId),

    /// A Monte Carlo harness could not produce a trustworthy estimate.
    #[error("harness error: {0}")]
    Harness(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::Degenerate(_))
    }
}
