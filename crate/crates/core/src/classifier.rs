//! Dual-head mode classifier: a bidirectional encoder whose first-position
//! vector feeds separate CCTO and TTNT heads.

use initiative_nn::dropout::{dropout_backward, dropout_forward, DropMask};
use initiative_nn::linear::Linear;
use initiative_nn::loss::argmax;
use initiative_nn::transformer::EncoderCache;
use initiative_nn::{cross_entropy, Encoder, ForwardMode, ModelConfig, Module, Param, ParamInit};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::codec::{render_classifier_input, Vocab, CLS};
use crate::corpus::{make_classifier_examples, split_of, Dialogue, DialogueMode, Split, TurnKind};
use crate::error::{Error, Result};
use crate::train::{fit, BatchStats, FitReport, TrainConfig};

/// `p = W0 v + b0`, `logits = W1 dropout(p) + b1`.
#[derive(Clone, Debug)]
pub struct Head {
    pub pool: Linear,
    pub out: Linear,
}

impl Head {
    fn new(init: &mut ParamInit, name: &str, dim: usize) -> Self {
        Self {
            pool: Linear::new(init, &format!("{name}.pool"), dim, dim),
            out: Linear::new(init, &format!("{name}.out"), dim, 2),
        }
    }
}

impl Module for Head {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.pool.visit(f);
        self.out.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.pool.visit_mut(f);
        self.out.visit_mut(f);
    }
}

#[derive(Clone, Debug)]
pub struct Classifier {
    pub encoder: Encoder,
    pub ccto: Head,
    pub ttnt: Head,
}

impl Module for Classifier {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.encoder.visit(f);
        self.ccto.visit(f);
        self.ttnt.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.encoder.visit_mut(f);
        self.ccto.visit_mut(f);
        self.ttnt.visit_mut(f);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierOutput {
    pub p_ccto: Array1<f64>,
    pub p_ttnt: Array1<f64>,
    pub logits_ccto: [f64; 2],
    pub logits_ttnt: [f64; 2],
    pub ccto: DialogueMode,
    pub ttnt: TurnKind,
}

struct HeadCache {
    dropped: Array2<f64>,
    mask: DropMask,
}

pub struct ClassifierForward {
    pub p_ccto: Array2<f64>,
    pub p_ttnt: Array2<f64>,
    pub logits_ccto: Array2<f64>,
    pub logits_ttnt: Array2<f64>,
    enc: EncoderCache,
    v_cls: Array2<f64>,
    rows: usize,
    heads: [HeadCache; 2],
}

impl ClassifierForward {
    pub fn outputs(&self) -> Vec<ClassifierOutput> {
        (0..self.p_ccto.nrows())
            .map(|i| {
                let lc = self.logits_ccto.row(i);
                let lt = self.logits_ttnt.row(i);
                ClassifierOutput {
                    p_ccto: self.p_ccto.row(i).to_owned(),
                    p_ttnt: self.p_ttnt.row(i).to_owned(),
                    logits_ccto: [lc[0], lc[1]],
                    logits_ttnt: [lt[0], lt[1]],
                    ccto: DialogueMode::from_index(argmax(lc)),
                    ttnt: TurnKind::from_index(argmax(lt)),
                }
            })
            .collect()
    }
}

impl Classifier {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let mut init = ParamInit::new(seed);
        let encoder = Encoder::new(cfg, &mut init)?;
        let e = cfg.embed_dim;
        Ok(Self {
            encoder,
            ccto: Head::new(&mut init, "ccto", e),
            ttnt: Head::new(&mut init, "ttnt", e),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        self.encoder.config()
    }

    pub fn embed_dim(&self) -> usize {
        self.config().embed_dim
    }

    pub fn forward(&self, batch: &[&[usize]], mode: &mut ForwardMode<'_>) -> Result<ClassifierForward> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if let Some(bad) = batch.iter().find(|s| s.first() != Some(&CLS)) {
            return Err(Error::InvalidArgument(format!(
                "classifier input must start with [CLS], got {:?}",
                bad.first()
            )));
        }
        let (hidden, enc) = self.encoder.forward(batch, mode)?;
        let v_cls = Encoder::first_rows(&hidden, enc.segments());
        let rate = self.config().dropout;
        let mut run = |h: &Head| {
            let pooled = h.pool.forward(&v_cls);
            let mut dropped = pooled.clone();
            let mask = dropout_forward(&mut dropped, rate, mode);
            let logits = h.out.forward(&dropped);
            (logits, pooled, HeadCache { dropped, mask })
        };
        let (logits_ccto, p_ccto, c) = run(&self.ccto);
        let (logits_ttnt, p_ttnt, t) = run(&self.ttnt);
        Ok(ClassifierForward {
            p_ccto,
            p_ttnt,
            logits_ccto,
            logits_ttnt,
            rows: hidden.nrows(),
            enc,
            v_cls,
            heads: [c, t],
        })
    }

    /// Eval-mode classification of one rendered history.
    pub fn classify(&self, tokens: &[usize]) -> Result<ClassifierOutput> {
        let f = self.forward(&[tokens], &mut ForwardMode::Eval)?;
        Ok(f.outputs().remove(0))
    }

    pub fn backward(&mut self, f: &ClassifierForward, d_ccto: &Array2<f64>, d_ttnt: &Array2<f64>) {
        let mut dv = Array2::zeros(f.v_cls.dim());
        for (head, cache, dl) in [
            (&mut self.ccto, &f.heads[0], d_ccto),
            (&mut self.ttnt, &f.heads[1], d_ttnt),
        ] {
            let mut dp = head.out.backward(&cache.dropped, dl);
            dropout_backward(&mut dp, &cache.mask);
            dv += &head.pool.backward(&f.v_cls, &dp);
        }
        let dh = Encoder::scatter_first_rows(&dv, f.enc.segments(), f.rows);
        self.encoder.backward(&f.enc, &dh);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledHistory {
    pub tokens: Vec<usize>,
    pub ccto: DialogueMode,
    pub ttnt: TurnKind,
}

pub fn classifier_data(ds: &[Dialogue], split: Split, vocab: &Vocab) -> Vec<LabeledHistory> {
    make_classifier_examples(&split_of(ds, split))
        .into_iter()
        .map(|e| LabeledHistory {
            tokens: render_classifier_input(&e.history, vocab),
            ccto: e.ccto,
            ttnt: e.ttnt,
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassifierLoss {
    pub total: f64,
    pub ccto: f64,
    pub ttnt: f64,
    pub ccto_correct: usize,
    pub ttnt_correct: usize,
    pub count: usize,
}

/// Sum of the two heads' mean cross-entropies.
pub fn classifier_loss(
    model: &mut Classifier,
    batch: &[&LabeledHistory],
    mode: &mut ForwardMode<'_>,
    with_grad: bool,
) -> Result<ClassifierLoss> {
    let tokens: Vec<&[usize]> = batch.iter().map(|b| b.tokens.as_slice()).collect();
    let f = model.forward(&tokens, mode)?;
    let all = vec![true; batch.len()];
    let yc: Vec<usize> = batch.iter().map(|b| b.ccto.index()).collect();
    let yt: Vec<usize> = batch.iter().map(|b| b.ttnt.index()).collect();
    let c = cross_entropy(&f.logits_ccto, &yc, &all)?;
    let t = cross_entropy(&f.logits_ttnt, &yt, &all)?;
    if with_grad {
        model.backward(&f, &c.dlogits, &t.dlogits);
    }
    Ok(ClassifierLoss {
        total: c.loss + t.loss,
        ccto: c.loss,
        ttnt: t.loss,
        ccto_correct: c.correct,
        ttnt_correct: t.correct,
        count: batch.len(),
    })
}

pub fn train_classifier(
    ds: &[Dialogue],
    vocab: &Vocab,
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(Classifier, FitReport)> {
    let train = classifier_data(ds, Split::Train, vocab);
    let valid = classifier_data(ds, Split::Valid, vocab);
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut cfg = cfg.clone();
    cfg.batch_size = cfg.batch_size.min(train.len());
    let mut clf = Classifier::new(model, cfg.seed)?;
    let report = fit(&mut clf, &train, &valid, &cfg, |m, b, mode, g| {
        let l = classifier_loss(m, b, mode, g)?;
        Ok(BatchStats {
            loss: l.total,
            count: l.count,
            correct: l.ccto_correct.min(l.ttnt_correct),
        })
    })?;
    Ok((clf, report))
}

/// Eval-mode predictions for every example.
pub fn predict(model: &Classifier, data: &[LabeledHistory]) -> Result<Vec<ClassifierOutput>> {
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.chunks(32) {
        let tokens: Vec<&[usize]> = chunk.iter().map(|b| b.tokens.as_slice()).collect();
        out.extend(model.forward(&tokens, &mut ForwardMode::Eval)?.outputs());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMetrics {
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub weighted: bool,
    /// Some class had no predictions or no gold examples; its undefined
    /// ratio counted as 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub zero_division: bool,
}

/// Percent-scaled accuracy, recall, precision and F1. Unweighted scores are
/// macro averages over the classes seen in either list; weighted scores
/// average per-class values by gold frequency.
pub fn classifier_metrics(preds: &[usize], golds: &[usize], weighted: bool) -> Result<ClassifierMetrics> {
    if preds.is_empty() || preds.len() != golds.len() {
        return Err(Error::InvalidArgument(format!(
            "metrics need equal-length non-empty label lists, got {} and {}",
            preds.len(),
            golds.len()
        )));
    }
    let classes = preds.iter().chain(golds).copied().max().unwrap_or(0) + 1;
    let present: Vec<usize> = (0..classes)
        .filter(|c| preds.contains(c) || golds.contains(c))
        .collect();
    let n = golds.len() as f64;
    let mut zero_division = false;
    let (mut r, mut p, mut f) = (0.0, 0.0, 0.0);
    for &c in &present {
        let tp = preds.iter().zip(golds).filter(|(a, b)| **a == c && **b == c).count() as f64;
        let predicted = preds.iter().filter(|&&a| a == c).count() as f64;
        let support = golds.iter().filter(|&&b| b == c).count() as f64;
        let ratio = |num: f64, den: f64, flag: &mut bool| {
            if den == 0.0 {
                *flag = true;
                0.0
            } else {
                num / den
            }
        };
        let prec = ratio(tp, predicted, &mut zero_division);
        let rec = ratio(tp, support, &mut zero_division);
        let f1 = if prec + rec == 0.0 {
            0.0
        } else {
            2.0 * prec * rec / (prec + rec)
        };
        let w = if weighted {
            support / n
        } else {
            1.0 / present.len() as f64
        };
        p += w * prec;
        r += w * rec;
        f += w * f1;
    }
    let correct = preds.iter().zip(golds).filter(|(a, b)| a == b).count() as f64;
    Ok(ClassifierMetrics {
        accuracy: 100.0 * correct / n,
        recall: 100.0 * r,
        precision: 100.0 * p,
        f1: 100.0 * f,
        weighted,
        zero_division,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub ccto: ClassifierMetrics,
    pub ttnt: ClassifierMetrics,
}

/// CCTO unweighted, TTNT weighted by class frequency.
pub fn classifier_report(model: &Classifier, data: &[LabeledHistory]) -> Result<ClassifierReport> {
    let out = predict(model, data)?;
    let pc: Vec<usize> = out.iter().map(|o| o.ccto.index()).collect();
    let gc: Vec<usize> = data.iter().map(|d| d.ccto.index()).collect();
    let pt: Vec<usize> = out.iter().map(|o| o.ttnt.index()).collect();
    let gt: Vec<usize> = data.iter().map(|d| d.ttnt.index()).collect();
    Ok(ClassifierReport {
        ccto: classifier_metrics(&pc, &gc, false)?,
        ttnt: classifier_metrics(&pt, &gt, true)?,
    })
}
