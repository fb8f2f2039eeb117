use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum LipError {
    /// Matrix/vector dimensions do not chain.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A configuration value is out of its admissible range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A mathematical hypothesis required by a bound does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Region enumeration would exceed its LP-call or wall-clock budget.
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    /// The simplex solver could not reach a trustworthy answer.
    #[error("indeterminate linear program: {0}")]
    Indeterminate(String),

    /// Adaptive quadrature stopped before reaching the requested tolerance.
    #[error("quadrature did not converge: achieved relative error {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl LipError {
    /// True for failures caused by the numerics or the budget rather than by the caller.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            LipError::BudgetExceeded(_) | LipError::Indeterminate(_) | LipError::Quadrature { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, LipError>;
