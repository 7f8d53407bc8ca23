//! Decoder training data, the token-level language-model loss and the
//! unified first-stage model.

use initiative_nn::transformer::DecoderCache;
use initiative_nn::{cross_entropy, Decoder, DecoderInput, ForwardMode, ModelConfig, ParamInit};
use ndarray::Array2;

use crate::codec::{render_lm_input, Vocab};
use crate::corpus::{make_lm_examples, split_of, Dialogue, Split, Stage};
use crate::error::{Error, Result};
use crate::train::{fit, BatchStats, FitReport, TrainConfig};

/// One teacher-forced sequence: `tokens` is input ++ target minus the last
/// target token, and `targets[r]` is scored at row `r` when `mask[r]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LmSeq {
    pub tokens: Vec<usize>,
    pub targets: Vec<usize>,
    pub mask: Vec<bool>,
}

impl LmSeq {
    pub fn new(input: &[usize], target: &[usize]) -> Self {
        assert!(!input.is_empty() && !target.is_empty());
        let mut tokens = input.to_vec();
        tokens.extend_from_slice(&target[..target.len() - 1]);
        let n = tokens.len();
        let mut targets = vec![0; n];
        let mut mask = vec![false; n];
        for (i, &t) in target.iter().enumerate() {
            let r = input.len() - 1 + i;
            targets[r] = t;
            mask[r] = true;
        }
        Self {
            tokens,
            targets,
            mask,
        }
    }

    pub fn target_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Renders the examples of `stage` for `split` into training sequences.
pub fn lm_sequences(
    ds: &[Dialogue],
    split: Split,
    stage: Stage,
    vocab: &Vocab,
    discrete_prompts: bool,
    max_len: usize,
) -> Result<Vec<LmSeq>> {
    let part = split_of(ds, split);
    let examples = match make_lm_examples(&part, stage) {
        Err(Error::NoTransitionTurns) if split != Split::Train => return Ok(Vec::new()),
        other => other?,
    };
    examples
        .iter()
        .map(|ex| {
            let (i, t) = render_lm_input(ex, vocab, discrete_prompts, max_len)?;
            Ok(LmSeq::new(&i, &t))
        })
        .collect()
}

pub struct LmForward {
    pub stats: BatchStats,
    pub dlogits: Array2<f64>,
    pub cache: DecoderCache,
}

/// Mean token cross-entropy over the target rows of a packed batch.
pub fn lm_forward(
    decoder: &Decoder,
    batch: &[&LmSeq],
    prompts: Option<&[[&[f64]; 2]]>,
    mode: &mut ForwardMode<'_>,
) -> Result<LmForward> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let inputs: Vec<DecoderInput<'_>> = batch
        .iter()
        .enumerate()
        .map(|(i, s)| DecoderInput {
            tokens: &s.tokens,
            prompts: prompts.map(|p| p[i]),
        })
        .collect();
    let (logits, cache) = decoder.forward(&inputs, mode)?;
    let targets: Vec<usize> = batch.iter().flat_map(|s| s.targets.iter().copied()).collect();
    let mask: Vec<bool> = batch.iter().flat_map(|s| s.mask.iter().copied()).collect();
    let ce = cross_entropy(&logits, &targets, &mask)?;
    Ok(LmForward {
        stats: BatchStats {
            loss: ce.loss,
            count: ce.count,
            correct: ce.correct,
        },
        dlogits: ce.dlogits,
        cache,
    })
}

/// Token cross-entropy on plain sequences; accumulates decoder gradients
/// when `with_grad`.
pub fn unified_loss(
    decoder: &mut Decoder,
    batch: &[&LmSeq],
    mode: &mut ForwardMode<'_>,
    with_grad: bool,
) -> Result<BatchStats> {
    let out = lm_forward(decoder, batch, None, mode)?;
    if with_grad {
        decoder.backward(&out.cache, &out.dlogits);
    }
    Ok(out.stats)
}

pub fn new_decoder(cfg: &ModelConfig, seed: u64) -> Result<Decoder> {
    Ok(Decoder::new(cfg, &mut ParamInit::new(seed))?)
}

/// Trains a decoder from scratch on every system turn with its preceding
/// user utterance.
pub fn train_unified(
    ds: &[Dialogue],
    vocab: &Vocab,
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(Decoder, FitReport)> {
    if model.vocab_size != vocab.len() {
        return Err(Error::CheckpointMismatch(format!(
            "decoder vocabulary {} differs from vocabulary size {}",
            model.vocab_size,
            vocab.len()
        )));
    }
    let train = lm_sequences(ds, Split::Train, Stage::Unified, vocab, false, model.max_seq_len)?;
    let valid = lm_sequences(ds, Split::Valid, Stage::Unified, vocab, false, model.max_seq_len)?;
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut decoder = new_decoder(model, cfg.seed)?;
    let report = fit(&mut decoder, &train, &valid, cfg, |d, b, m, g| unified_loss(d, b, m, g))?;
    Ok((decoder, report))
}

/// Teacher-forced per-token accuracy over `data`.
pub fn token_accuracy(decoder: &mut Decoder, data: &[LmSeq]) -> Result<f64> {
    let (_, acc) = crate::train::evaluate(decoder, data, 16, |d, b, m, g| unified_loss(d, b, m, g))?;
    Ok(acc)
}
