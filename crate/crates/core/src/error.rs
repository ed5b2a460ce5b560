use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("singular matrix: pivot magnitude {pivot:e} below threshold")]
    SingularMatrix { pivot: f64 },
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("empty input")]
    EmptyInput,
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid discount factor {0}: must lie in (0, 1 - 1e-6)")]
    InvalidDiscount(f64),
    #[error("{what} is not stochastic: {detail}")]
    NotStochastic { what: String, detail: String },
    #[error("factor rank {rank} exceeds S*A = {max}")]
    RankTooLarge { rank: usize, max: usize },
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("enumeration of {count} cases exceeds the limit {limit}")]
    TooLarge { count: u128, limit: u128 },
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("iteration limit {0} reached without convergence")]
    NoConvergence(usize),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(what: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            what,
            expected,
            got,
        }
    }

    /// Whether the error reports malformed input rather than a solver failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::EmptyInput
                | Error::DimensionMismatch { .. }
                | Error::InvalidDiscount(_)
                | Error::NotStochastic { .. }
                | Error::RankTooLarge { .. }
                | Error::IndexOutOfRange { .. }
                | Error::Invalid { .. }
        )
    }
}
