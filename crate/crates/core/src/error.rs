use thiserror::Error;

/// Errors raised by the kernels, bound solvers and the exact solver.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum MespError {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("matrix asymmetric beyond tolerance: |a_ij - a_ji| = {gap:e} at ({i}, {j})")]
    AsymmetricBeyondTol { i: usize, j: usize, gap: f64 },

    #[error("empty subset")]
    EmptySubset,

    #[error("index {index} out of range for order {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("instance of order {n} exceeds the enumeration cap of {cap}")]
    TooLargeForOracle { n: usize, cap: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("point is infeasible: {0}")]
    Infeasible(String),

    #[error("iteration limit reached after {iterations} iterations")]
    MaxIterations { iterations: usize },

    #[error("non-finite Newton step")]
    NonfiniteStep,

    #[error("objective is not concave along the Newton direction")]
    ConcavityViolation,

    #[error("lifted pair violates the linking constraint x + y = e (residual {residual:e})")]
    LinkViolation { residual: f64 },

    #[error("index {0} is not free in this node")]
    IndexNotFree(usize),

    #[error("no fractional index to branch on")]
    NoFreeIndex,

    #[error("bound evaluation failed: {0}")]
    BoundFailure(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for MespError {
    fn from(e: std::io::Error) -> Self {
        MespError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, MespError>;
