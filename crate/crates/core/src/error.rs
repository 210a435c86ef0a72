use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("invalid MDP: {}", .0.join("; "))]
    InvalidMdp(Vec<String>),

    #[error("invalid model class: {0}")]
    InvalidModelClass(String),

    #[error("action index {action} out of range (n_actions = {n_actions})")]
    ActionOutOfRange { action: usize, n_actions: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("support is not sorted at position {0}")]
    UnsortedSupport(usize),

    #[error("unsupported norm selector: {0}")]
    UnsupportedNorm(String),

    #[error("bound inapplicable: {0}")]
    BoundInapplicable(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("non-finite loss in component {component} at step {step}: learning rate too high?")]
    NonFiniteLoss { component: usize, step: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular linear system")]
    Singular,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
