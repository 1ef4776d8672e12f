use thiserror::Error;

/// Errors raised by estimation, distribution and test routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpdError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not reach tolerance {requested:e} (achieved {achieved:e})")]
    Integration { requested: f64, achieved: f64 },

    #[error("numerical differentiation failed: {0}")]
    Differentiation(String),

    #[error("rank deficiency: {0}")]
    Rank(String),

    #[error("infeasible restriction: {0}")]
    Feasibility(String),

    #[error("optimizer failed to converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence { iterations: usize, gradient_norm: f64 },

    #[error("scale parameter driven to the boundary (sigma = {0:e})")]
    Boundary(f64),

    #[error("non-finite model evaluation at observation {index}")]
    Evaluation { index: usize },

    #[error("series truncated with remaining mass {tail_bound:e}")]
    SeriesTruncated { tail_bound: f64 },

    #[error("invalid usage: {0}")]
    Usage(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: u64, column: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, DpdError>;

pub(crate) fn check_nonneg(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(DpdError::Domain(format!("{name} must be a finite non-negative number, got {value}")))
    }
}

pub(crate) fn check_probability(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(DpdError::Domain(format!("{name} must lie in (0, 1), got {value}")))
    }
}
