use thiserror::Error;

/// Errors raised by the scenario-optimization library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A documented precondition of an operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The problem description is inconsistent or incomplete.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An exhaustive search would exceed its combinatorial guard.
    #[error("exhaustive search too large: {what} = {actual} exceeds limit {limit}")]
    SizeGuard {
        what: &'static str,
        actual: u128,
        limit: u128,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
