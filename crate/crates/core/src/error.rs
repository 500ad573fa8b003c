use thiserror::Error;

/// Errors raised by lattice construction, representation, evaluation and sharing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("node budget exceeded: lattice needs {needed} leaves, budget is {max}")]
    NodeBudget { needed: u128, max: usize },

    #[error("jump intensity bound violated: sum(nu)*dt = {value} > 0.5 at step {step}")]
    IntensityBound { value: f64, step: usize },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("singular normal equations at level {level}, node {node}")]
    Singular { level: usize, node: usize },

    #[error("representation residual {residual} exceeds limit {limit}")]
    ResidualTooLarge { residual: f64, limit: f64 },

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("missing oracle: {0}")]
    MissingOracle(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
