use thiserror::Error;

/// Errors raised by the numerical layers of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("point {x} lies outside the open domain ({lo}, {hi})")]
    Domain { x: f64, lo: f64, hi: f64 },

    #[error("parameter out of range: {0}")]
    Parameter(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("quadrature resolution {got} below required {need}")]
    Resolution { got: usize, need: usize },

    #[error("operator is singular on the requested input: {0}")]
    Singular(String),

    #[error("point too close to the non-smooth set of the Bellman function: {0}")]
    SingularRegion(String),

    #[error("no convergence after {iterations} refinements (last two values {prev}, {last})")]
    Convergence { iterations: usize, prev: f64, last: f64 },

    #[error("estimation failed: {0}")]
    Estimation(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
