use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("sequence of length {len} exceeds the maximum of {max}")]
    Overlength { len: usize, max: usize },
    #[error("prompt override needs a sequence of at least 2 tokens, got {0}")]
    OverrideTooShort(usize),
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },
    #[error("token id {id} is out of range for a vocabulary of {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },
    #[error("all positions are masked; cross-entropy is undefined")]
    AllMasked,
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
