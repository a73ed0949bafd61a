use thiserror::Error;

/// Errors produced by problem construction, the solvers and the benchmark driver.
#[derive(Debug, Error)]
pub enum GslopeError {
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("input contains no data rows")]
    EmptyInput,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("group {group} has an all-zero design block")]
    ZeroGroupBlock { group: usize },

    #[error("regularization sequence is identically zero")]
    DegenerateLambda,

    #[error("objective became non-finite at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("dual point is not feasible")]
    InfeasibleDual,

    #[error("duality gap {gap:e} is negative beyond round-off")]
    WeakDualityViolation { gap: f64 },

    #[error("active set is empty")]
    EmptyActiveSet,

    #[error("group {group} was screened but is nonzero in the reference solution")]
    SafenessViolation { group: usize },

    #[error("screened and unscreened solutions differ by {max_diff:e} (tolerance {tol:e})")]
    SolutionMismatch { max_diff: f64, tol: f64 },

    #[error("power iteration did not converge in {iterations} iterations")]
    PowerIteration { iterations: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GslopeError>;
