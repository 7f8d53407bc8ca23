//! Prompt control: the discrete-prompt decoder, the LSTM/MLP bridge that
//! turns classifier pooled vectors into prompt embeddings, and generation
//! with either kind of prompt.

use std::collections::HashMap;

use initiative_nn::dropout::{dropout_backward, dropout_forward};
use initiative_nn::lstm::Lstm;
use initiative_nn::mlp::Mlp;
use initiative_nn::{cross_entropy, Decoder, ForwardMode, Module, Param, ParamInit};
use ndarray::{concatenate, s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::classifier::{Classifier, ClassifierOutput};
use crate::codec::{
    is_control, prompt_tokens, render_classifier_input, render_context, render_lm_input, Vocab,
    PROMPT_TOKENS, TRANSITION,
};
use crate::corpus::{make_lm_examples, split_of, Dialogue, DialogueTurn, GenerationMode, Split, Stage, PROMPT_WINDOW};
use crate::error::{Error, Result};
use crate::lm::{lm_forward, lm_sequences, unified_loss, LmSeq};
use crate::sampling::{sample_response, DecodeParams};
use crate::train::{evaluate, fit, BatchStats, FitReport, TrainConfig};

/// A generated response cut at its first `[TRANSITION]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitResponse {
    pub normal_part: String,
    pub transition_part: Option<String>,
    /// The marker was the first token, leaving no normal response.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

/// Splits at the first `[TRANSITION]`; later markers and all other control
/// tokens are dropped from both parts.
pub fn split_transition(raw: &[usize], vocab: &Vocab) -> SplitResponse {
    let text = |ids: &[usize]| {
        let kept: Vec<usize> = ids
            .iter()
            .copied()
            .filter(|&t| !is_control(t) || t == crate::codec::UNK)
            .collect();
        vocab.decode(&kept)
    };
    match raw.iter().position(|&t| t == TRANSITION) {
        None => SplitResponse {
            normal_part: text(raw),
            transition_part: None,
            degenerate: false,
        },
        Some(i) => SplitResponse {
            normal_part: text(&raw[..i]),
            transition_part: Some(text(&raw[i + 1..])),
            degenerate: i == 0,
        },
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Generated {
    pub response: SplitResponse,
    /// Sampled ids without `[END]`.
    pub tokens: Vec<usize>,
    pub truncated: bool,
}

impl Generated {
    pub fn has_transition(&self) -> bool {
        self.tokens.contains(&TRANSITION)
    }
}

fn context_budget(decoder: &Decoder, params: &DecodeParams) -> usize {
    let max = decoder.config().max_seq_len;
    max.saturating_sub(params.max_new_tokens.min(max / 2) + 1).max(3)
}

fn generate(
    decoder: &Decoder,
    vocab: &Vocab,
    context: &[DialogueTurn],
    placeholders: Option<GenerationMode>,
    prompts: Option<[&[f64]; 2]>,
    params: &DecodeParams,
) -> Result<Generated> {
    let input = render_context(context, placeholders, vocab, context_budget(decoder, params))?;
    let s = sample_response(decoder, &input, prompts, params)?;
    Ok(Generated {
        response: split_transition(&s.tokens, vocab),
        tokens: s.tokens,
        truncated: s.truncated,
    })
}

fn window(history: &[DialogueTurn], n: usize) -> &[DialogueTurn] {
    &history[history.len().saturating_sub(n)..]
}

/// Unified model: the last user utterance only, no prompts.
pub fn generate_unified(
    decoder: &Decoder,
    vocab: &Vocab,
    history: &[DialogueTurn],
    params: &DecodeParams,
) -> Result<Generated> {
    generate(decoder, vocab, window(history, 1), None, None, params)
}

/// Discrete model: the mode's two prompt tokens followed by the last three
/// turns. With `prompts == false` the tokens are left out, which is how the
/// prompt-stripped twin is driven.
pub fn generate_discrete(
    decoder: &Decoder,
    vocab: &Vocab,
    history: &[DialogueTurn],
    mode: GenerationMode,
    params: &DecodeParams,
    prompts: bool,
) -> Result<Generated> {
    let ctx = window(history, PROMPT_WINDOW);
    generate(decoder, vocab, ctx, prompts.then_some(mode), None, params)
}

/// Copies the unified decoder and redraws the embeddings of the prompt
/// tokens and `[TRANSITION]`.
pub fn init_discrete(unified: &Decoder, seed: u64) -> Decoder {
    let mut d = unified.clone();
    let mut init = ParamInit::new(seed);
    let e = d.config().embed_dim;
    let emb = d.token_embedding_mut();
    for &t in &PROMPT_TOKENS {
        init.fill_normal(&mut emb.value[t * e..(t + 1) * e]);
    }
    d
}

/// Continues training on transition turns, each seen once per TTNT value.
pub fn train_discrete(
    unified: &Decoder,
    ds: &[Dialogue],
    vocab: &Vocab,
    cfg: &TrainConfig,
    prompts: bool,
) -> Result<(Decoder, FitReport)> {
    let max_len = unified.config().max_seq_len;
    if unified.config().vocab_size != vocab.len() {
        return Err(Error::CheckpointMismatch(format!(
            "decoder vocabulary {} differs from vocabulary size {}",
            unified.config().vocab_size,
            vocab.len()
        )));
    }
    let train = lm_sequences(ds, Split::Train, Stage::Prompted, vocab, prompts, max_len)?;
    let valid = lm_sequences(ds, Split::Valid, Stage::Prompted, vocab, prompts, max_len)?;
    let mut decoder = init_discrete(unified, cfg.seed);
    let report = fit(&mut decoder, &train, &valid, cfg, |d, b, m, g| unified_loss(d, b, m, g))?;
    Ok((decoder, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub dropout: f64,
}

impl BridgeConfig {
    pub fn new(embed_dim: usize) -> Self {
        Self {
            embed_dim,
            hidden: embed_dim,
            dropout: 0.1,
        }
    }
}

/// Unidirectional LSTM over `(p_ccto, p_ttnt)` followed by a shared
/// two-layer ReLU perceptron applied to each step.
#[derive(Clone, Debug)]
pub struct Bridge {
    pub lstm: Lstm,
    pub mlp: Mlp,
    config: BridgeConfig,
}

impl Module for Bridge {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.lstm.visit(f);
        self.mlp.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.lstm.visit_mut(f);
        self.mlp.visit_mut(f);
    }
}

pub struct BridgeForward {
    pub cp_ccto: Array2<f64>,
    pub cp_ttnt: Array2<f64>,
    lstm: initiative_nn::lstm::LstmCache,
    mlp: initiative_nn::mlp::MlpCache,
    mask: initiative_nn::dropout::DropMask,
}

impl Bridge {
    pub fn new(config: BridgeConfig, seed: u64) -> Self {
        let mut init = ParamInit::new(seed);
        Self {
            lstm: Lstm::new(&mut init, "bridge.lstm", config.embed_dim, config.hidden),
            mlp: Mlp::new(&mut init, "bridge.mlp", config.hidden, config.hidden, config.embed_dim),
            config,
        }
    }

    pub fn config(&self) -> &BridgeConfig {
        &self.config
    }

    /// Inputs are `[batch x E]`.
    pub fn forward(
        &self,
        p_ccto: &Array2<f64>,
        p_ttnt: &Array2<f64>,
        mode: &mut ForwardMode<'_>,
    ) -> Result<BridgeForward> {
        let e = self.config.embed_dim;
        if p_ccto.ncols() != e || p_ttnt.ncols() != e || p_ccto.nrows() != p_ttnt.nrows() {
            return Err(initiative_nn::NnError::DimensionMismatch {
                expected: e,
                got: p_ccto.ncols().max(p_ttnt.ncols()),
                context: "bridge input",
            }
            .into());
        }
        let b = p_ccto.nrows();
        let (hs, lstm) = self.lstm.forward(&[p_ccto.clone(), p_ttnt.clone()]);
        let mut stacked = concatenate(Axis(0), &[hs[0].view(), hs[1].view()]).expect("same width");
        let mask = dropout_forward(&mut stacked, self.config.dropout, mode);
        let (out, mlp) = self.mlp.forward(&stacked);
        Ok(BridgeForward {
            cp_ccto: out.slice(s![..b, ..]).to_owned(),
            cp_ttnt: out.slice(s![b.., ..]).to_owned(),
            lstm,
            mlp,
            mask,
        })
    }

    /// Eval-mode prompts for one classifier output.
    pub fn prompts(&self, out: &ClassifierOutput) -> Result<[Array1<f64>; 2]> {
        let row = |v: &Array1<f64>| v.clone().insert_axis(Axis(0));
        let f = self.forward(&row(&out.p_ccto), &row(&out.p_ttnt), &mut ForwardMode::Eval)?;
        Ok([f.cp_ccto.row(0).to_owned(), f.cp_ttnt.row(0).to_owned()])
    }

    pub fn backward(&mut self, f: &BridgeForward, d_ccto: &Array2<f64>, d_ttnt: &Array2<f64>) {
        let b = d_ccto.nrows();
        let dout = concatenate(Axis(0), &[d_ccto.view(), d_ttnt.view()]).expect("same width");
        let mut dh = self.mlp.backward(&f.mlp, &dout);
        dropout_backward(&mut dh, &f.mask);
        let dhs = [dh.slice(s![..b, ..]).to_owned(), dh.slice(s![b.., ..]).to_owned()];
        self.lstm.backward(&f.lstm, &dhs);
    }
}

/// One bridge training example: frozen classifier pooled vectors, the
/// decoder sequence (prompt positions hold placeholders) and the gold
/// prompt tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct BridgeItem {
    pub p_ccto: Vec<f64>,
    pub p_ttnt: Vec<f64>,
    pub seq: LmSeq,
    pub gold: [usize; 2],
}

pub fn ensure_frozen<M: Module + ?Sized>(m: &M) -> Result<()> {
    match m.params().into_iter().find(|p| p.trainable) {
        Some(p) => Err(Error::UnfrozenBackbone(p.name().to_string())),
        None => Ok(()),
    }
}

/// Every system turn of the augmented dialogues in `split`, with pooled
/// vectors from the frozen classifier.
pub fn bridge_data(
    classifier: &Classifier,
    ds: &[Dialogue],
    split: Split,
    vocab: &Vocab,
    max_len: usize,
) -> Result<Vec<BridgeItem>> {
    ensure_frozen(classifier)?;
    let part = split_of(ds, split);
    let by_id: HashMap<&str, &Dialogue> = part.iter().map(|d| (d.id.as_str(), d)).collect();
    let examples = make_lm_examples(&part, Stage::Bridge)?;
    let mut items = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(32) {
        let histories: Vec<Vec<usize>> = chunk
            .iter()
            .map(|ex| render_classifier_input(&by_id[ex.dialogue_id.as_str()].turns[..ex.turn_index], vocab))
            .collect();
        let refs: Vec<&[usize]> = histories.iter().map(Vec::as_slice).collect();
        let outs = classifier.forward(&refs, &mut ForwardMode::Eval)?.outputs();
        for (ex, out) in chunk.iter().zip(outs) {
            let (i, t) = render_lm_input(ex, vocab, true, max_len)?;
            items.push(BridgeItem {
                p_ccto: out.p_ccto.to_vec(),
                p_ttnt: out.p_ttnt.to_vec(),
                seq: LmSeq::new(&i, &t),
                gold: prompt_tokens(ex.generation_mode),
            });
        }
    }
    Ok(items)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BridgeLoss {
    pub total: f64,
    pub response: f64,
    pub ccto: f64,
    pub ttnt: f64,
    /// Examples whose two prompt positions both predict the gold token.
    pub prompt_correct: usize,
    pub token_correct: usize,
    pub token_count: usize,
    pub count: usize,
}

fn stack(rows: impl Iterator<Item = Vec<f64>>, width: usize) -> Array2<f64> {
    let data: Vec<f64> = rows.flatten().collect();
    Array2::from_shape_vec((data.len() / width, width), data).expect("rows share a width")
}

/// Response cross-entropy through the frozen decoder plus prompt-token
/// cross-entropy at both prompt positions. Gradients reach only the bridge.
pub fn bridge_loss(
    bridge: &mut Bridge,
    decoder: &mut Decoder,
    batch: &[&BridgeItem],
    mode: &mut ForwardMode<'_>,
    with_grad: bool,
) -> Result<BridgeLoss> {
    ensure_frozen(decoder)?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let e = bridge.config.embed_dim;
    if decoder.config().embed_dim != e {
        return Err(Error::CheckpointMismatch(format!(
            "bridge width {e} differs from decoder width {}",
            decoder.config().embed_dim
        )));
    }
    let pc = stack(batch.iter().map(|b| b.p_ccto.clone()), e);
    let pt = stack(batch.iter().map(|b| b.p_ttnt.clone()), e);
    let bf = bridge.forward(&pc, &pt, mode)?;
    let cp: Vec<[&[f64]; 2]> = (0..batch.len())
        .map(|i| {
            [
                bf.cp_ccto.row(i).to_slice().expect("contiguous"),
                bf.cp_ttnt.row(i).to_slice().expect("contiguous"),
            ]
        })
        .collect();
    let seqs: Vec<&LmSeq> = batch.iter().map(|b| &b.seq).collect();
    let lm = lm_forward(decoder, &seqs, Some(&cp), mode)?;

    let emb = decoder.token_embedding().mat().to_owned();
    let all = vec![true; batch.len()];
    let gc: Vec<usize> = batch.iter().map(|b| b.gold[0]).collect();
    let gt: Vec<usize> = batch.iter().map(|b| b.gold[1]).collect();
    let lc = bf.cp_ccto.dot(&emb.t());
    let lt = bf.cp_ttnt.dot(&emb.t());
    let cc = cross_entropy(&lc, &gc, &all)?;
    let ct = cross_entropy(&lt, &gt, &all)?;
    let argmax = |m: &Array2<f64>, i: usize| initiative_nn::loss::argmax(m.row(i));
    let prompt_correct = (0..batch.len())
        .filter(|&i| argmax(&lc, i) == gc[i] && argmax(&lt, i) == gt[i])
        .count();

    if with_grad {
        let dprompts = decoder.backward(&lm.cache, &lm.dlogits);
        let mut dc = cc.dlogits.dot(&emb);
        let mut dt = ct.dlogits.dot(&emb);
        for (i, d) in dprompts.iter().enumerate() {
            let [a, b] = d.as_ref().expect("every sequence was overridden");
            dc.row_mut(i).zip_mut_with(&Array1::from(a.clone()), |x, y| *x += y);
            dt.row_mut(i).zip_mut_with(&Array1::from(b.clone()), |x, y| *x += y);
        }
        bridge.backward(&bf, &dc, &dt);
    }
    Ok(BridgeLoss {
        total: lm.stats.loss + cc.loss + ct.loss,
        response: lm.stats.loss,
        ccto: cc.loss,
        ttnt: ct.loss,
        prompt_correct,
        token_correct: lm.stats.correct,
        token_count: lm.stats.count,
        count: batch.len(),
    })
}

/// Trains only the bridge. Both backbones are frozen for the duration and
/// left frozen.
pub fn train_bridge(
    classifier: &mut Classifier,
    decoder: &mut Decoder,
    ds: &[Dialogue],
    vocab: &Vocab,
    cfg: &TrainConfig,
) -> Result<(Bridge, FitReport)> {
    let e = decoder.config().embed_dim;
    if classifier.embed_dim() != e {
        return Err(Error::CheckpointMismatch(format!(
            "classifier width {} differs from decoder width {e}",
            classifier.embed_dim()
        )));
    }
    classifier.set_trainable(false);
    decoder.set_trainable(false);
    let max_len = decoder.config().max_seq_len;
    let train = bridge_data(classifier, ds, Split::Train, vocab, max_len)?;
    let valid = bridge_data(classifier, ds, Split::Valid, vocab, max_len)?;
    if train.is_empty() {
        return Err(Error::NoTransitionTurns);
    }
    let mut bridge = Bridge::new(BridgeConfig::new(e), cfg.seed);
    let report = fit(&mut bridge, &train, &valid, cfg, |b, batch, mode, g| {
        let l = bridge_loss(b, decoder, batch, mode, g)?;
        Ok(BatchStats {
            loss: l.total,
            count: l.count,
            correct: l.prompt_correct,
        })
    })?;
    Ok((bridge, report))
}

/// Eval-mode prompt accuracy (both positions right) and teacher-forced
/// response token accuracy.
pub fn bridge_accuracy(bridge: &mut Bridge, decoder: &mut Decoder, data: &[BridgeItem]) -> Result<(f64, f64)> {
    let mut tokens = (0, 0);
    let (_, prompt) = evaluate(bridge, data, 16, |b, batch, mode, g| {
        let l = bridge_loss(b, decoder, batch, mode, g)?;
        tokens.0 += l.token_correct;
        tokens.1 += l.token_count;
        Ok(BatchStats {
            loss: l.total,
            count: l.count,
            correct: l.prompt_correct,
        })
    })?;
    Ok((prompt, tokens.0 as f64 / tokens.1.max(1) as f64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousOutput {
    pub generated: Generated,
    pub mode: GenerationMode,
    pub classifier: ClassifierOutput,
}

/// Classifies the full history, maps the pooled vectors through the bridge
/// and decodes the last three turns with the resulting prompt embeddings.
/// Decoding settings follow the predicted CCTO unless `params` is given.
pub fn generate_continuous(
    history: &[DialogueTurn],
    classifier: &Classifier,
    bridge: &Bridge,
    decoder: &Decoder,
    vocab: &Vocab,
    table: &crate::sampling::DecodeTable,
    params: Option<DecodeParams>,
    seed: u64,
) -> Result<ContinuousOutput> {
    if history.is_empty() {
        return Err(Error::InvalidArgument("history is empty".into()));
    }
    let out = classifier.classify(&render_classifier_input(history, vocab))?;
    let mode = GenerationMode::new(out.ccto, out.ttnt);
    let [cc, ct] = bridge.prompts(&out)?;
    let params = params.unwrap_or_else(|| table.get(mode.ccto)).with_seed(seed);
    let prompts = [cc.as_slice().expect("contiguous"), ct.as_slice().expect("contiguous")];
    let generated = generate(
        decoder,
        vocab,
        window(history, PROMPT_WINDOW),
        Some(mode),
        Some(prompts),
        &params,
    )?;
    Ok(ContinuousOutput {
        generated,
        mode,
        classifier: out,
    })
}
