//! Run configuration: one TOML document, overridable from the command line.

use std::path::{Path, PathBuf};

use initiative_core::sampling::{DecodeParams, DecodeTable};
use initiative_core::train::TrainConfig;
use initiative_nn::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Network shape without the vocabulary size, which comes from `vocab.json`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub max_seq_len: usize,
    pub dropout: f64,
}

impl NetConfig {
    pub fn decoder() -> Self {
        Self {
            embed_dim: 128,
            layers: 4,
            heads: 4,
            ff_dim: 512,
            max_seq_len: 128,
            dropout: 0.1,
        }
    }

    pub fn encoder() -> Self {
        Self {
            layers: 2,
            max_seq_len: initiative_core::codec::CLASSIFIER_MAX_LEN,
            ..Self::decoder()
        }
    }

    pub fn with_vocab(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            layers: self.layers,
            heads: self.heads,
            ff_dim: self.ff_dim,
            max_seq_len: self.max_seq_len,
            dropout: self.dropout,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabConfig {
    pub min_freq: usize,
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self { min_freq: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConfigs {
    pub unified: TrainConfig,
    pub classifier: TrainConfig,
    pub discrete: TrainConfig,
    pub bridge: TrainConfig,
}

impl Default for StageConfigs {
    fn default() -> Self {
        Self {
            unified: TrainConfig::unified(),
            classifier: TrainConfig::classifier(),
            discrete: TrainConfig::discrete(),
            bridge: TrainConfig::bridge(),
        }
    }
}

impl StageConfigs {
    fn all_mut(&mut self) -> [&mut TrainConfig; 4] {
        [&mut self.unified, &mut self.classifier, &mut self.discrete, &mut self.bridge]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Defaults to `<out>/corpus.jsonl`.
    pub corpus: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub vocab: VocabConfig,
    pub decoder: NetConfig,
    pub encoder: NetConfig,
    pub train: StageConfigs,
    pub decode: DecodeTable,
    /// Directory for per-session JSON-lines transcripts of the chat service.
    pub sessions_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            out: PathBuf::from("runs/default"),
            seed: 0,
            vocab: VocabConfig::default(),
            decoder: NetConfig::decoder(),
            encoder: NetConfig::encoder(),
            train: StageConfigs::default(),
            decode: DecodeTable::default(),
            sessions_dir: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl RunConfig {
    /// Missing keys, including keys inside partially given sections, keep
    /// their defaults.
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let bad = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        let given: toml::Table = toml::from_str(text).map_err(|e| bad(&e))?;
        let mut merged = toml::Table::try_from(Self::default()).map_err(|e| bad(&e))?;
        merge(&mut merged, given);
        toml::Value::Table(merged).try_into().map_err(|e| bad(&e))
    }

    pub fn load(path: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    /// A seed override reseeds every training stage as well.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(c) = &o.corpus {
            self.corpus = Some(c.clone());
        }
        if let Some(d) = &o.out {
            self.out = d.clone();
        }
        if let Some(s) = o.seed {
            self.seed = s;
            for t in self.train.all_mut() {
                t.seed = s;
            }
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.decoder.embed_dim != self.encoder.embed_dim {
            return Err(CliError::Config(format!(
                "encoder width {} must equal decoder width {}",
                self.encoder.embed_dim, self.decoder.embed_dim
            )));
        }
        for t in [&self.train.unified, &self.train.classifier, &self.train.discrete, &self.train.bridge] {
            t.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        for p in [self.decode.chitchat, self.decode.taskoriented] {
            p.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.corpus.clone().unwrap_or_else(|| self.out.join(CORPUS))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn decode_params(&self) -> [DecodeParams; 2] {
        [self.decode.chitchat, self.decode.taskoriented]
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

pub const CORPUS: &str = "corpus.jsonl";
pub const VOCAB: &str = "vocab.json";
pub const STATS: &str = "stats.json";
pub const UNIFIED_CKPT: &str = "unified.ckpt";
pub const CLASSIFIER_CKPT: &str = "classifier.ckpt";
pub const DISCRETE_CKPT: &str = "discrete.ckpt";
pub const ABLATION_CKPT: &str = "discrete_ablation.ckpt";
pub const BRIDGE_CKPT: &str = "bridge.ckpt";
pub const CLASSIFIER_METRICS: &str = "classifier_metrics.json";
pub const SERVE_LOCK: &str = ".serve.lock";
