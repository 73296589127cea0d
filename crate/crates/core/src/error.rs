use thiserror::Error;

/// Errors produced by assembly, operators, and solvers.
#[derive(Debug, Error)]
pub enum SgfeError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite coefficient value {value} at ({x}, {y})")]
    NonFiniteCoefficient { value: f64, x: f64, y: f64 },

    #[error("root bracketing failed for {family} mode {index}")]
    RootBracketing { family: &'static str, index: usize },

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("viscosity positivity violated: lower bound {nu_lower:.6} <= 0 (sigma = {sigma}, chi = {chi:.6}); analytical scaling unavailable")]
    PositivityViolated { nu_lower: f64, sigma: f64, chi: f64 },

    #[error("dense assembly guard: size {size} exceeds limit {limit}")]
    SizeGuard { size: usize, limit: usize },

    #[error("non-positive H-inner product {value:.3e} at iteration {iteration}; the preconditioner scaling a = {scaling} is likely too large")]
    IndefiniteInnerProduct {
        iteration: usize,
        value: f64,
        scaling: f64,
    },

    #[error("numerical breakdown in {0}")]
    Breakdown(String),

    #[error("bound containment violated: {0}")]
    ContainmentViolated(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SgfeError>;
