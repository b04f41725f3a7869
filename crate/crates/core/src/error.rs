use thiserror::Error;

/// Errors raised by the algebraic, numerical and exact routines of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension {0}: need m >= 2")]
    InvalidDimension(usize),
    #[error("invalid degree {degree} for dimension {dim}")]
    InvalidDegree { degree: usize, dim: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("chirality is only defined in even dimension (got m = {0})")]
    NoChirality(usize),
    #[error("invalid rank parameter: {0}")]
    InvalidRank(String),
    #[error("value kind not supported here: {0}")]
    ValueKind(String),
    #[error("internal consistency check failed: {0}")]
    Consistency(String),
    #[error("point {point:?} is within {radius} of the domain boundary")]
    NearBoundary { point: Vec<f64>, radius: f64 },
    #[error("cutoff {cutoff} too small for connection modes up to {max_mode}")]
    Aliasing { cutoff: i64, max_mode: i64 },
    #[error("eigensolver failure: {0}")]
    Eigensolver(String),
    #[error("branch matching failed at t = {t}: overlap {overlap:.3} below threshold")]
    BranchMatching { t: f64, overlap: f64 },
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
