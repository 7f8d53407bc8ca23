use std::path::Path;

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing prerequisite {artifact}; run `{command}` first")]
    MissingPrerequisite { artifact: String, command: &'static str },
    #[error("{0} is being served (lock file present); stop the server before training")]
    Locked(String),
    #[error("corpus failed validation: {0}")]
    InvalidCorpus(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    NotFound(String),
    #[error("model `{0}` is not loaded")]
    ModelUnavailable(String),
    #[error(transparent)]
    Core(#[from] initiative_core::Error),
    #[error(transparent)]
    Nn(#[from] initiative_nn::NnError),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Io { .. } => "io",
            Self::MissingPrerequisite { .. } => "missing_prerequisite",
            Self::Locked(_) => "locked",
            Self::InvalidCorpus(_) => "invalid_corpus",
            Self::BadRequest(_) => "bad_request",
            Self::Conflict(_) => "conflict",
            Self::NotFound(_) => "not_found",
            Self::ModelUnavailable(_) => "model_unavailable",
            Self::Core(_) => "core",
            Self::Nn(_) => "nn",
        }
    }

    /// One-line JSON form for stderr and HTTP error bodies.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({ "error": self.to_string(), "kind": self.kind() });
        if let Self::MissingPrerequisite { artifact, command } = self {
            v["missing"] = json!(artifact);
            v["run"] = json!(command);
        }
        v
    }
}
