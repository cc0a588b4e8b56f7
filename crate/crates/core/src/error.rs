use thiserror::Error;

/// Errors produced by graph construction, scoring, search, and generation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{0} must be finite")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("node index {index} out of range for a graph on {p} nodes")]
    NodeOutOfRange { index: usize, p: usize },

    #[error("edge set contains a directed cycle")]
    Cyclic,

    #[error("covariate matrix is rank deficient (rank {rank} with {m} columns)")]
    RankDeficient { rank: usize, m: usize },

    #[error("node {node} has {size} parents but only {effective} effective samples")]
    TooManyParents {
        node: usize,
        size: usize,
        effective: usize,
    },

    #[error("numerical factorization failed: {0}")]
    Factorization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
