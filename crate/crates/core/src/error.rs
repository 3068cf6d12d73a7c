use thiserror::Error;

/// Errors raised by the discretization and solver layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid knot vector: {0}")]
    KnotVector(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("matrix is not symmetric positive definite (pivot {pivot} at row {row})")]
    NotSpd { row: usize, pivot: f64 },

    #[error("problem size {size} exceeds the dense limit {limit}")]
    SizeGuard { size: usize, limit: usize },

    #[error("configuration error: {0}")]
    Configuration(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
