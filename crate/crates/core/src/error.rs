use thiserror::Error;

/// Errors produced by the dPlN toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// `E(X^r)` is infinite because `r >= alpha`.
    #[error("moment of order {order} does not exist for alpha = {alpha}")]
    MomentDoesNotExist { order: f64, alpha: f64 },

    /// A root finder ran out of iterations. The last bracket is attached.
    #[error("no convergence after {iterations} iterations, last bracket [{lo}, {hi}]")]
    Convergence { iterations: usize, lo: f64, hi: f64 },

    /// A required input was empty or otherwise violated a precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The queue has no equilibrium for the requested parameters.
    #[error("unstable system: {0}")]
    Unstable(String),

    /// A transform denominator vanished.
    #[error("numerical singularity: {0}")]
    Singular(String),

    /// Input could not be parsed.
    #[error("parse error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, msg: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
