use thiserror::Error;

/// Errors raised while building or validating a graph.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("node id {id} out of range for graph with {n} nodes")]
    NodeOutOfRange { id: usize, n: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("edge ({u}, {v}) has negative weight {w}")]
    NegativeWeight { u: usize, v: usize, w: f64 },
    #[error("edge ({u}, {v}) has non-finite weight")]
    NonFiniteWeight { u: usize, v: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
}

/// Errors raised while building, loading, or configuring an oracle.
#[derive(Debug, Error)]
pub enum OracleError {
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("invalid level override: {0}")]
    InvalidOverride(String),
    #[error("level sampling left A_{{k-1}} empty after {0} attempts")]
    ResamplingExhausted(usize),
    #[error("estimator contract violated: {0}")]
    EstimatorContract(String),
    #[error("value {0} is not an element of the scale")]
    NotInScale(f64),
    #[error("even index {i} outside [2, {max}] or odd")]
    BadIndex { i: usize, max: usize },
    #[error("audit: {0}")]
    Audit(String),
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
