use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("operator must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid coupling: {0}")]
    Coupling(String),

    #[error("dead post-selection: p_f = {p_f:e} is at or below the floor {floor:e}")]
    DeadPostSelection { p_f: f64, floor: f64 },

    #[error("missing meter setting {0}")]
    MissingSetting(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
