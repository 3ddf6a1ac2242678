use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid gate: {0}")]
    InvalidGate(String),

    #[error("invalid leaf: {0}")]
    InvalidLeaf(String),

    /// The query wire is missing, or its leaf already pins the queried bit.
    #[error("invalid query: {0}")]
    InvalidQuery(String),

    /// Conditioning left zero probability mass.
    #[error("inconsistent evidence: {0}")]
    InconsistentEvidence(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
