use thiserror::Error;

/// Errors raised across the graph, network, environment and training layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("graph contains a directed cycle: {0:?}")]
    CyclicGraph(Vec<usize>),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("order is inconsistent with graph: {0}")]
    Consistency(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
