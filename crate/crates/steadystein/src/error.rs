use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("unstable system: offered load {r} must be below {n} servers when alpha = 0")]
    Stability { r: f64, n: u64 },
    #[error("truncation failed: {0}")]
    Truncation(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("invalid phase-type distribution: {0}")]
    InvalidPhaseType(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
