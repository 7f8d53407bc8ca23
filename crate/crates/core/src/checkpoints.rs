//! Checkpoint kinds and (de)serialization of every trained component.

use std::collections::BTreeMap;

use initiative_nn::{Checkpoint, Decoder, ModelConfig, ParamInit};
use serde_json::{json, Value};

use crate::bridge::{Bridge, BridgeConfig};
use crate::classifier::Classifier;
use crate::codec::Vocab;
use crate::error::{Error, Result};
use crate::train::FitReport;

pub const UNIFIED: &str = "unified";
pub const DISCRETE: &str = "discrete";
pub const DISCRETE_ABLATION: &str = "discrete-ablation";
pub const CLASSIFIER: &str = "classifier";
pub const BRIDGE: &str = "bridge";

pub const FROZEN_CLASSIFIER_HASH: &str = "frozen_classifier_hash";
pub const FROZEN_DECODER_HASH: &str = "frozen_decoder_hash";

fn metadata(vocab: Option<&Vocab>, report: &FitReport) -> BTreeMap<String, Value> {
    let mut m = BTreeMap::new();
    if let Some(v) = vocab {
        m.insert("vocab".into(), json!(v.tokens()));
    }
    m.insert("fit".into(), serde_json::to_value(report).expect("report serializes"));
    m
}

pub fn checkpoint_vocab(ckpt: &Checkpoint) -> Result<Vocab> {
    let tokens: Vec<String> = ckpt
        .header
        .metadata
        .get("vocab")
        .cloned()
        .map(serde_json::from_value)
        .transpose()
        .map_err(|e| Error::CheckpointMismatch(format!("bad vocabulary: {e}")))?
        .ok_or_else(|| Error::CheckpointMismatch("checkpoint carries no vocabulary".into()))?;
    Vocab::from_tokens(tokens)
}

fn expect_kind(ckpt: &Checkpoint, kinds: &[&str]) -> Result<()> {
    if kinds.contains(&ckpt.header.kind.as_str()) {
        Ok(())
    } else {
        Err(Error::CheckpointMismatch(format!(
            "expected a {} checkpoint, found `{}`",
            kinds.join(" or "),
            ckpt.header.kind
        )))
    }
}

pub fn decoder_checkpoint(kind: &str, decoder: &Decoder, vocab: &Vocab, seed: u64, report: &FitReport) -> Result<Checkpoint> {
    Ok(Checkpoint::from_module(
        kind,
        decoder.config(),
        seed,
        metadata(Some(vocab), report),
        decoder,
    )?)
}

pub fn load_decoder(ckpt: &Checkpoint, kinds: &[&str]) -> Result<(Decoder, Vocab)> {
    expect_kind(ckpt, kinds)?;
    let cfg: ModelConfig = ckpt.config()?;
    let vocab = checkpoint_vocab(ckpt)?;
    if cfg.vocab_size != vocab.len() {
        return Err(Error::CheckpointMismatch(format!(
            "config vocabulary {} differs from stored vocabulary {}",
            cfg.vocab_size,
            vocab.len()
        )));
    }
    let mut d = Decoder::new(&cfg, &mut ParamInit::new(ckpt.header.seed))?;
    ckpt.restore_into(&mut d)?;
    Ok((d, vocab))
}

pub fn classifier_checkpoint(clf: &Classifier, vocab: &Vocab, seed: u64, report: &FitReport) -> Result<Checkpoint> {
    Ok(Checkpoint::from_module(
        CLASSIFIER,
        clf.config(),
        seed,
        metadata(Some(vocab), report),
        clf,
    )?)
}

pub fn load_classifier(ckpt: &Checkpoint) -> Result<(Classifier, Vocab)> {
    expect_kind(ckpt, &[CLASSIFIER])?;
    let cfg: ModelConfig = ckpt.config()?;
    let mut clf = Classifier::new(&cfg, ckpt.header.seed)?;
    ckpt.restore_into(&mut clf)?;
    Ok((clf, checkpoint_vocab(ckpt)?))
}

/// Stores only the bridge parameters, pinned to the content hashes of the
/// frozen classifier and decoder checkpoints.
pub fn bridge_checkpoint(
    bridge: &Bridge,
    seed: u64,
    report: &FitReport,
    classifier: &Checkpoint,
    decoder: &Checkpoint,
) -> Result<Checkpoint> {
    let mut meta = metadata(None, report);
    meta.insert(FROZEN_CLASSIFIER_HASH.into(), json!(classifier.content_hash()?));
    meta.insert(FROZEN_DECODER_HASH.into(), json!(decoder.content_hash()?));
    Ok(Checkpoint::from_module(BRIDGE, bridge.config(), seed, meta, bridge)?)
}

/// Refuses to load unless `classifier` and `decoder` are the exact
/// checkpoints the bridge was trained against.
pub fn load_bridge(ckpt: &Checkpoint, classifier: &Checkpoint, decoder: &Checkpoint) -> Result<Bridge> {
    expect_kind(ckpt, &[BRIDGE])?;
    for (key, other) in [(FROZEN_CLASSIFIER_HASH, classifier), (FROZEN_DECODER_HASH, decoder)] {
        let pinned = ckpt.header.metadata.get(key).and_then(Value::as_str).unwrap_or_default();
        let actual = other.content_hash()?;
        if pinned != actual {
            return Err(Error::CheckpointMismatch(format!(
                "bridge was trained against {key} {pinned}, but the supplied checkpoint hashes to {actual}"
            )));
        }
    }
    let cfg: BridgeConfig = ckpt.config()?;
    let mut b = Bridge::new(cfg, ckpt.header.seed);
    ckpt.restore_into(&mut b)?;
    Ok(b)
}
