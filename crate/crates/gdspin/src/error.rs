use thiserror::Error;

#[derive(Debug, Error)]
pub enum GdError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix entry ({i},{j}) breaks symmetry")]
    Asymmetric { i: usize, j: usize },
    #[error("nonzero diagonal entry at {0}")]
    NonzeroDiagonal(usize),
    #[error("entry index ({i},{j}) out of range for n={n}")]
    IndexOutOfRange { i: usize, j: usize, n: usize },
    #[error("duplicate entry ({i},{j})")]
    DuplicateEntry { i: usize, j: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("configuration is not an Ising assignment (phase {theta} at site {site})")]
    NonIsingConfiguration { site: usize, theta: f64 },
    #[error("non-finite state at t={t}; reduce dt")]
    NonFinite { t: f64 },
    #[error("random regular graph sampling failed after {0} attempts")]
    PairingExhausted(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GdError>;
