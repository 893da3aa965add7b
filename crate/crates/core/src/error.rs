use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("grid error: {0}")]
    Grid(String),
    #[error("parity error: {0}")]
    Parity(String),
    #[error("frame mismatch: expected {expected}, got {got}")]
    FrameMismatch { expected: String, got: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("CFL violation: {0}")]
    Cfl(String),
    #[error("overflow guard: {0}")]
    Overflow(String),
    #[error("constraint error: {0}")]
    Constraint(String),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
