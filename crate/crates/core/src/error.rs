use thiserror::Error;

use crate::mdp::Violation;

/// Errors produced by the solvers, model I/O and estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("model failed validation with {} violation(s): {}", .0.len(), summarize(.0))]
    Validation(Vec<Violation>),
    #[error("parse error at {pointer}: {message}")]
    Parse { pointer: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("iteration limit reached after {iterations} iterations (residual {residual:e})")]
    IterationLimit { iterations: usize, residual: f64 },
    #[error("sandwich width {width:e} did not reach the tolerance {tol:e}; {hint}")]
    Stagnation { width: f64, tol: f64, hint: String },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("numeric range exceeded: {0}")]
    Range(String),
    #[error("internal error: {0}")]
    Internal(String),
}

fn summarize(v: &[Violation]) -> String {
    v.iter().take(3).map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
