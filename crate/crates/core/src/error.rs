use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("link {link}: invalid inertia: {reason}")]
    InvalidInertia { link: usize, reason: String },
    #[error("invalid link index {link} (model has {count} links)")]
    InvalidLink { link: usize, count: usize },
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("mass matrix is numerically singular")]
    SingularMassMatrix,
    #[error("weight matrix is not symmetric positive definite")]
    WeightNotSpd,
    #[error("singular KKT system")]
    SingularKkt,
    #[error("inconsistent equality constraints (residual {0:e})")]
    InconsistentConstraints(f64),
    #[error("invalid task hierarchy: {0}")]
    InvalidHierarchy(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("simulation failed at step {step}: {source}")]
    Simulation {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error: {0}")]
    Io(String),
}
