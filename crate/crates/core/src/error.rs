use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid edge ({i}, {j}) for p = {p}")]
    InvalidEdge { i: usize, j: usize, p: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("precision synthesis failed: smallest eigenvalue {min_eigenvalue} after diagonal boost")]
    Synthesis { min_eigenvalue: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("non-finite value at position {index}")]
    NonFinite { index: usize },

    #[error("every candidate pattern failed to fit")]
    AllFitsFailed,

    #[error("pattern space has {size} members, above the enumeration cap of {cap}")]
    SpaceTooLarge { size: String, cap: usize },

    #[error("chain produced no usable iterations")]
    EmptyChain,
}

pub type Result<T> = std::result::Result<T, Error>;
