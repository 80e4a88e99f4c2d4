//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid model or experiment parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Vector or matrix dimensions do not agree.
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    /// A rule or policy of the wrong kind was passed to a kind-specific
    /// operation (e.g. a general rule where a maximum-SINR rule is required).
    #[error("policy kind error: {0}")]
    PolicyKind(String),

    /// An operation contract was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A rule failed the beam-symmetry check.
    #[error("rule is not beam symmetric: {0}")]
    Asymmetric(String),

    /// No feasible point exists for the requested constraints.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
