use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Invalid inputs are reported as [`Error::InvalidParameter`] and friends so
/// front-ends can separate them from numerical failures like
/// [`Error::FitFailed`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("lattice size must be an odd integer >= 3, got {0}")]
    InvalidLatticeSize(usize),

    #[error("error rate p must lie in [0, 0.5], got {0}")]
    InvalidErrorRate(f64),

    #[error("chain weight {weight} outside [0, {max}]")]
    WeightOutOfRange { weight: usize, max: usize },

    #[error("chain has {found} edges but the lattice has {expected}")]
    LatticeMismatch { expected: usize, found: usize },

    #[error("chain is not a cycle (its syndrome has {0} defects)")]
    NotACycle(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("full enumeration is limited to L = 3 (got L = {0}); pass a weight cap")]
    EnumerationTooLarge(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("fit did not converge: {0}")]
    FitFailed(String),

    #[error("p = {p} is at or above the threshold {p_c0}; no finite overhead")]
    AboveThreshold { p: f64, p_c0: f64 },

    #[error("target failure rate {target} is unreachable: {reason}")]
    UnreachableTarget { target: f64, reason: String },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
