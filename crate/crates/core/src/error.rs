use thiserror::Error;

/// Errors produced by the Group SLOPE library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty design")]
    EmptyDesign,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("weight for group {group} must be positive and finite, got {value}")]
    InvalidWeight { group: usize, value: f64 },

    #[error("group {0} has an all-zero design block")]
    ZeroGroup(usize),

    #[error("invalid lambda sequence: {0}")]
    InvalidLambda(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("design is not orthogonal across groups (max |U_i^T U_j| = {0:e})")]
    NotOrthogonal(f64),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("support too large for σ estimation ({columns} fitted columns, n = {n})")]
    DofExhausted { columns: usize, n: usize },

    #[error("invalid scenario: {0}")]
    Scenario(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
