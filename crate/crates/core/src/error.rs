use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("certificate failure: {0}")]
    Certificate(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl From<oneshot_conic::ConicError> for CoreError {
    fn from(e: oneshot_conic::ConicError) -> Self {
        CoreError::Solver(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
