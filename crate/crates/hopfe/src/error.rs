use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum HopfeError {
    #[error("zero quaternion does not define a rotation")]
    ZeroQuaternion,

    #[error("point is not on the unit sphere (norm {norm})")]
    NotOnSphere { norm: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("sinkhorn kernel underflowed to an all-zero row (epsilon too small)")]
    NumericalOverflow,

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("{file}:{line}: {msg}")]
    ParseError {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("token vector width mismatch at line {line}: expected {expected}, got {got}")]
    WidthMismatch {
        expected: usize,
        got: usize,
        line: usize,
    },

    #[error("unknown entity: {0}")]
    UnknownEntity(String),

    #[error("unknown relation: {0}")]
    UnknownRelation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HopfeError>;
