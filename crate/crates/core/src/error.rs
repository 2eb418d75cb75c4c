use thiserror::Error;

/// Errors raised by the numerical engines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Malformed arguments: shape mismatches, non-positive step sizes, bad grids.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Input outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The discretisation cannot deliver the requested accuracy.
    #[error("precision error: {0}")]
    Precision(String),

    /// An iterative solver hit its iteration cap.
    #[error("no convergence after {iterations} iterations (gap estimate {gap:.3e})")]
    Convergence { iterations: usize, gap: f64 },

    /// A time integrator produced a non-finite or otherwise unusable state.
    #[error("numerical failure in {engine} at step {step}: {reason}")]
    Numerical {
        engine: &'static str,
        step: u64,
        reason: String,
    },

    /// Phase recovery crossed a region where the wave amplitude vanishes.
    #[error("phase unwrap failed: {0}")]
    PhaseUnwrap(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
