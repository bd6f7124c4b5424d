//! Crate-wide error type.

/// Errors surfaced by library operations.
///
/// Preconditions stated on an operation map to [`Error::InvalidArgument`];
/// violating an episode contract (e.g. stepping a finished environment)
/// maps to [`Error::ContractViolation`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The operation is not defined for this input kind.
    #[error("not supported: {0}")]
    NotSupported(String),

    /// A usage contract was broken (e.g. stepping past a terminal state).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Iterative solver exhausted its iteration budget.
    #[error("no convergence after {iterations} iterations (last distance {distance:e})")]
    ConvergenceFailure { iterations: usize, distance: f64 },

    /// A gradient or parameter became NaN/inf during optimization.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Checkpoint header version is not one this build reads.
    #[error("unsupported checkpoint version: expected `MOQNET v1`, found `{found}`")]
    CheckpointVersion { found: String },

    /// Checkpoint or config body failed to parse; names the offending field.
    #[error("malformed {what}: {field}: {detail}")]
    Parse {
        what: &'static str,
        field: String,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(what: &'static str, field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Parse {
            what,
            field: field.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
