use thiserror::Error;

/// Errors produced anywhere in the solver stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PsdcError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: {index} (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("pole in Cauchy-like matrix at row node {row}, column node {col}")]
    Pole { row: usize, col: usize },

    #[error("size guard exceeded: order {n} > limit {limit}")]
    SizeGuard { n: usize, limit: usize },

    #[error("poles not strictly ascending at position {0}")]
    NotAscending(usize),

    #[error("zero weight at position {0}; deflate before solving")]
    ZeroWeight(usize),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("deadlock: ranks {blocked:?} blocked with no pending messages")]
    Deadlock { blocked: Vec<usize> },

    #[error("message protocol violation: {0}")]
    Protocol(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for PsdcError {
    fn from(e: std::io::Error) -> Self {
        PsdcError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, PsdcError>;

impl PsdcError {
    /// Process exit status: 2 for bad input, 3 for numerical or runtime failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PsdcError::InvalidInput(_)
            | PsdcError::DimensionMismatch(_)
            | PsdcError::IndexOutOfRange { .. }
            | PsdcError::SizeGuard { .. }
            | PsdcError::Parse(_)
            | PsdcError::Io(_) => 2,
            _ => 3,
        }
    }
}
