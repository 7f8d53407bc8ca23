use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed JSON: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("dialogue `{dialogue}`: invalid `{field}`: {reason}")]
    Schema {
        dialogue: String,
        field: String,
        reason: String,
    },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("corpus has no transition turns; the prompted example set is empty")]
    NoTransitionTurns,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("rendered sequence needs {len} tokens but the limit is {max}")]
    Overlength { len: usize, max: usize },
    #[error("malformed dialogue-act string: {0}")]
    ActParse(String),
    #[error("vocabulary error: {0}")]
    Vocab(String),
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("empty batch")]
    EmptyBatch,
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),
    #[error("frozen backbone parameter `{0}` is trainable")]
    UnfrozenBackbone(String),
    #[error(transparent)]
    Nn(#[from] initiative_nn::NnError),
}

pub type Result<T> = std::result::Result<T, Error>;
