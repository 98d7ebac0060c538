//! Error type shared by every module.

use thiserror::Error;

/// Failures reported by evaluators, samplers and experiments.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("singular parameter: {0}")]
    SingularParameter(String),
    #[error("series did not converge within {0} terms")]
    NonConvergent(usize),
    #[error("series has no termination index")]
    NonTerminating,
    #[error("configuration does not match pattern: {0}")]
    PatternMismatch(String),
    #[error("inadmissible parameters: {0}")]
    InadmissibleParameters(String),
    #[error("inadmissible weights: {0}")]
    InadmissibleWeights(String),
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),
    #[error("operation requires trigonometric mode")]
    ModeError,
    #[error("no admissible contour: {0}")]
    ContourInfeasible(String),
    #[error("quadrature not converged (doubling difference {0:e})")]
    NotConverged(f64),
    #[error("point outside domain: {0}")]
    OutOfDomain(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
