use thiserror::Error;

/// Errors shared by all numeric routines in this crate.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// A design (sub)matrix is numerically rank deficient.
    #[error("rank deficient matrix: {0}")]
    RankDeficient(String),

    /// Input shapes are inconsistent.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A scalar or structural argument is outside its valid range.
    #[error("domain error: {0}")]
    DomainError(String),

    /// An operation that needs a non-empty selected set received an empty one.
    #[error("empty selection set")]
    EmptySelection,

    /// A residual-based variance estimate has non-positive degrees of freedom,
    /// typically because the lasso support swallowed the sample.
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    /// An iterative solver ran out of its iteration budget.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// Conditioning on a selection event that was observed too rarely.
    #[error("insufficient conditioning: modal selection set frequency {frequency:.4} below {minimum:.4}")]
    InsufficientConditioning { frequency: f64, minimum: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
