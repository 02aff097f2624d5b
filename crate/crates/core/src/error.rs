use alloc::string::String;

/// Errors raised anywhere in the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty input line")]
    EmptyLine,
    #[error("invalid synthetic task spec: {0}")]
    InvalidSpec(String),
    #[error("loss must be a scalar, got a {rows}x{cols} array")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("non-finite value detected in {0}")]
    NaNDetected(String),
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("empty sequence")]
    EmptySequence,
    #[error("empty list")]
    EmptyList,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("missing reference for item {0}")]
    MissingReference(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = core::result::Result<T, Error>;
