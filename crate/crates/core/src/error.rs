use thiserror::Error;

/// Errors raised while building games, running learners, or handling artifacts.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("degenerate prior: {0}")]
    DegeneratePrior(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("unsupported observation index {0}: marginal mass is zero")]
    UnsupportedObservation(usize),

    #[error("memory budget exceeded: tensor needs {needed} bytes, budget is {budget} bytes; use coarser grids or the symmetric path")]
    BudgetExceeded { needed: u64, budget: u64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("non-finite gradient for agent {agent} at iteration {iteration}")]
    NonFiniteGradient { agent: usize, iteration: usize },

    #[error("corrupt learner state: {0}")]
    CorruptState(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("artifact error: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
