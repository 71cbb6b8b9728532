use thiserror::Error;

/// Crate-wide error type. The CLI maps these onto process exit codes, so
/// variants are grouped by failure class rather than by module.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("syntax error at byte {pos}: expected {expected}, found {found}")]
    Syntax {
        pos: usize,
        expected: String,
        found: String,
    },

    /// Negative scale coefficient in formula position. Formulas are
    /// non-negative-real-valued, so only terms may carry signed scalars.
    #[error("negative scale coefficient in formula position at byte {pos}")]
    ScaleNegative { pos: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("budget exceeded: {required} needed, budget {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("matrix not hermitian: residual {residual:.3e}")]
    NotHermitian { residual: f64 },

    #[error("tuple too far from the PVM set: residual {residual:.3e} > tol {tol:.3e}")]
    TooFar { residual: f64, tol: f64 },

    #[error("unbound variable x{0}")]
    UnboundVariable(u32),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
