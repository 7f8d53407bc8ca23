//! Loaded model snapshots and the per-session turn logic shared by the
//! terminal chat and the HTTP service.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use initiative_core::bridge::{generate_continuous, generate_discrete, generate_unified, Bridge, Generated};
use initiative_core::checkpoints::{self, load_bridge, load_classifier, load_decoder};
use initiative_core::classifier::Classifier;
use initiative_core::codec::Vocab;
use initiative_core::corpus::{DialogueMode, DialogueTurn, GenerationMode, TurnKind};
use initiative_core::eval::turn_seed;
use initiative_core::sampling::DecodeTable;
use initiative_nn::{Checkpoint, Decoder};
use serde::{Deserialize, Serialize};

use crate::config::{self, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Unified,
    Discrete,
    Continuous,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Unified, ModelKind::Discrete, ModelKind::Continuous];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Unified => "unified",
            Self::Discrete => "discrete",
            Self::Continuous => "continuous",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown model `{s}` (expected unified, discrete or continuous)"))
    }
}

pub fn load_checkpoint(path: &Path, command: &'static str) -> CliResult<Checkpoint> {
    if !path.exists() {
        return Err(CliError::MissingPrerequisite {
            artifact: path.display().to_string(),
            command,
        });
    }
    Ok(Checkpoint::load(path)?)
}

/// Immutable inference snapshot. The continuous model reuses the discrete
/// decoder it was trained against.
pub struct Models {
    pub vocab: Vocab,
    pub unified: Option<Decoder>,
    pub discrete: Option<Decoder>,
    pub classifier: Option<Classifier>,
    pub bridge: Option<Bridge>,
    pub decode: DecodeTable,
}

impl Models {
    /// Loads exactly what `wanted` needs; a missing checkpoint is an error.
    pub fn load(cfg: &RunConfig, wanted: &[ModelKind]) -> CliResult<Self> {
        let mut vocab: Option<Vocab> = None;
        let mut agree = |v: Vocab| -> CliResult<()> {
            match &vocab {
                Some(known) if *known != v => Err(CliError::Core(initiative_core::Error::CheckpointMismatch(
                    "checkpoints were trained with different vocabularies".into(),
                ))),
                Some(_) => Ok(()),
                None => {
                    vocab = Some(v);
                    Ok(())
                }
            }
        };
        let (mut unified, mut discrete, mut classifier, mut bridge) = (None, None, None, None);
        if wanted.contains(&ModelKind::Unified) {
            let ck = load_checkpoint(&cfg.path(config::UNIFIED_CKPT), "train-unified")?;
            let (d, v) = load_decoder(&ck, &[checkpoints::UNIFIED])?;
            agree(v)?;
            unified = Some(d);
        }
        if wanted.iter().any(|k| matches!(k, ModelKind::Discrete | ModelKind::Continuous)) {
            let dck = load_checkpoint(&cfg.path(config::DISCRETE_CKPT), "train-discrete")?;
            let (d, v) = load_decoder(&dck, &[checkpoints::DISCRETE])?;
            agree(v)?;
            discrete = Some(d);
            if wanted.contains(&ModelKind::Continuous) {
                let cck = load_checkpoint(&cfg.path(config::CLASSIFIER_CKPT), "train-classifier")?;
                let bck = load_checkpoint(&cfg.path(config::BRIDGE_CKPT), "train-bridge")?;
                let (c, v) = load_classifier(&cck)?;
                agree(v)?;
                bridge = Some(load_bridge(&bck, &cck, &dck)?);
                classifier = Some(c);
            }
        }
        let vocab = vocab.ok_or_else(|| CliError::Config("no model selected".into()))?;
        Ok(Self {
            vocab,
            unified,
            discrete,
            classifier,
            bridge,
            decode: cfg.decode,
        })
    }

    /// Loads every variant whose checkpoints exist; errors if none do.
    pub fn load_available(cfg: &RunConfig) -> CliResult<Self> {
        let present = |f: &str| cfg.path(f).exists();
        let mut wanted = Vec::new();
        if present(config::UNIFIED_CKPT) {
            wanted.push(ModelKind::Unified);
        }
        if present(config::DISCRETE_CKPT) {
            wanted.push(ModelKind::Discrete);
            if present(config::CLASSIFIER_CKPT) && present(config::BRIDGE_CKPT) {
                wanted.push(ModelKind::Continuous);
            }
        }
        if wanted.is_empty() {
            return Err(CliError::MissingPrerequisite {
                artifact: cfg.path(config::UNIFIED_CKPT).display().to_string(),
                command: "train-unified",
            });
        }
        Self::load(cfg, &wanted)
    }

    pub fn available(&self) -> Vec<ModelKind> {
        ModelKind::ALL.into_iter().filter(|&k| self.has(k)).collect()
    }

    pub fn has(&self, kind: ModelKind) -> bool {
        match kind {
            ModelKind::Unified => self.unified.is_some(),
            ModelKind::Discrete => self.discrete.is_some(),
            ModelKind::Continuous => self.discrete.is_some() && self.classifier.is_some() && self.bridge.is_some(),
        }
    }

    /// One system response to `history`, which must end with the user turn.
    /// `manual` steers the discrete model and is ignored by the others.
    pub fn respond(&self, kind: ModelKind, history: &[DialogueTurn], manual: GenerationMode, seed: u64) -> CliResult<Reply> {
        let unavailable = || CliError::ModelUnavailable(kind.to_string());
        let (generated, mode) = match kind {
            ModelKind::Unified => {
                let d = self.unified.as_ref().ok_or_else(unavailable)?;
                let params = self.decode.get(DialogueMode::Chitchat).with_seed(seed);
                (generate_unified(d, &self.vocab, history, &params)?, None)
            }
            ModelKind::Discrete => {
                let d = self.discrete.as_ref().ok_or_else(unavailable)?;
                let params = self.decode.get(manual.ccto).with_seed(seed);
                (generate_discrete(d, &self.vocab, history, manual, &params, true)?, Some(manual))
            }
            ModelKind::Continuous => {
                let (Some(d), Some(c), Some(b)) = (&self.discrete, &self.classifier, &self.bridge) else {
                    return Err(unavailable());
                };
                let out = generate_continuous(history, c, b, d, &self.vocab, &self.decode, None, seed)?;
                (out.generated, Some(out.mode))
            }
        };
        Ok(Reply {
            model: kind,
            mode,
            generated,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reply {
    pub model: ModelKind,
    /// Mode the response was conditioned on: the manual mode for the
    /// discrete model, the classifier prediction for the continuous one.
    pub mode: Option<GenerationMode>,
    pub generated: Generated,
}

impl Reply {
    pub fn response(&self) -> &str {
        &self.generated.response.normal_part
    }

    pub fn transition_sentence(&self) -> Option<&str> {
        self.generated.response.transition_part.as_deref()
    }
}

/// Conversation state. The model is fixed at creation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub model: ModelKind,
    pub history: Vec<DialogueTurn>,
    /// Prompt pair used by the discrete model when a turn gives none.
    pub manual: GenerationMode,
    pub seed: u64,
}

impl Session {
    pub fn new(id: impl Into<String>, model: ModelKind, seed: u64) -> Self {
        Self {
            id: id.into(),
            model,
            history: Vec::new(),
            manual: GenerationMode::new(DialogueMode::Chitchat, TurnKind::Normal),
            seed,
        }
    }

    /// Generates the reply to `utterance` without touching the session;
    /// returns it with the user and system turns to append.
    pub fn respond(
        &self,
        models: &Models,
        utterance: &str,
        mode_override: Option<GenerationMode>,
        seed: Option<u64>,
    ) -> CliResult<(Reply, [DialogueTurn; 2])> {
        let utterance = utterance.trim();
        if utterance.is_empty() {
            return Err(CliError::BadRequest("utterance is empty".into()));
        }
        if mode_override.is_some() && self.model != ModelKind::Discrete {
            return Err(CliError::BadRequest(format!(
                "mode_override applies to the discrete model, this session uses {}",
                self.model
            )));
        }
        let manual = mode_override.unwrap_or(self.manual);
        let mut history = self.history.clone();
        history.push(DialogueTurn::user(utterance, manual.ccto));
        let seed = seed.unwrap_or_else(|| turn_seed(self.seed, &self.id, self.history.len()));
        let reply = models.respond(self.model, &history, manual, seed)?;
        let ccto = reply.mode.map_or(manual.ccto, |m| m.ccto);
        let mut user = history.pop().expect("just pushed");
        user.mode = ccto;
        let mut system = DialogueTurn::system(reply.response(), ccto);
        if let Some(t) = reply.transition_sentence() {
            system.is_transition_turn = true;
            system.transition_sentence = Some(t.to_string());
        }
        Ok((reply, [user, system]))
    }

    pub fn commit(&mut self, turns: [DialogueTurn; 2], mode_override: Option<GenerationMode>) {
        if let Some(m) = mode_override {
            self.manual = m;
        }
        self.history.extend(turns);
    }
}
