//! Shared mini-batch training loop with AdamW, gradient clipping and early
//! stopping on validation loss.

use initiative_nn::optim::clip_grad_norm;
use initiative_nn::{AdamW, AdamWConfig, ForwardMode, Module};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub weight_decay: f64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            batch_size: 16,
            max_epochs: 20,
            patience: 2,
            seed: 0,
            weight_decay: 0.01,
            clip_norm: Some(1.0),
        }
    }
}

impl TrainConfig {
    pub fn unified() -> Self {
        Self::default()
    }

    pub fn classifier() -> Self {
        Self {
            batch_size: 60,
            ..Self::default()
        }
    }

    pub fn discrete() -> Self {
        Self::default()
    }

    pub fn bridge() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch size and max epochs must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.weight_decay < 0.0 {
            return bad("weight decay must be non-negative");
        }
        if matches!(self.clip_norm, Some(c) if c <= 0.0) {
            return bad("clip norm must be positive");
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// Loss over one batch. `loss` is the mean the gradient corresponds to,
/// `count` the number of scored units and `correct` the argmax hits.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BatchStats {
    pub loss: f64,
    pub count: usize,
    pub correct: usize,
}

#[derive(Clone, Copy, Debug, Default)]
struct Totals {
    loss: f64,
    count: usize,
    correct: usize,
}

impl Totals {
    fn add(&mut self, s: BatchStats) {
        self.loss += s.loss * s.count as f64;
        self.count += s.count;
        self.correct += s.correct;
    }

    fn mean(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.loss / self.count as f64
        }
    }

    fn accuracy(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.correct as f64 / self.count as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub epochs_run: usize,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    pub valid_loss: Vec<f64>,
    pub steps: u64,
}

/// Evaluation-mode pass over `data`, no gradients.
pub fn evaluate<M, E, F>(model: &mut M, data: &[E], batch_size: usize, mut step: F) -> Result<(f64, f64)>
where
    F: FnMut(&mut M, &[&E], &mut ForwardMode<'_>, bool) -> Result<BatchStats>,
{
    let mut t = Totals::default();
    let refs: Vec<&E> = data.iter().collect();
    for chunk in refs.chunks(batch_size.max(1)) {
        t.add(step(model, chunk, &mut ForwardMode::Eval, false)?);
    }
    Ok((t.mean(), t.accuracy()))
}

/// Runs mini-batch AdamW over `train`, evaluating `valid` after each epoch
/// and keeping the parameters of the best epoch.
///
/// `step(model, batch, mode, with_grad)` must accumulate gradients of the
/// returned mean loss into the model when `with_grad` is set. Gradients are
/// zeroed before every call. With an empty `valid` set the epoch's training
/// loss is monitored instead.
pub fn fit<M, E, F>(model: &mut M, train: &[E], valid: &[E], cfg: &TrainConfig, mut step: F) -> Result<FitReport>
where
    M: Module,
    F: FnMut(&mut M, &[&E], &mut ForwardMode<'_>, bool) -> Result<BatchStats>,
{
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(1);
    let mut opt = AdamW::new(cfg.adamw());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut report = FitReport::default();
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    let mut bad_epochs = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut order_rng);
        let mut totals = Totals::default();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&E> = chunk.iter().map(|&i| &train[i]).collect();
            model.zero_grad();
            let stats = step(model, &batch, &mut ForwardMode::Train(&mut dropout_rng), true)?;
            if !stats.loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    loss: stats.loss,
                });
            }
            if let Some(c) = cfg.clip_norm {
                clip_grad_norm(model, c);
            }
            opt.step(model)?;
            totals.add(stats);
        }
        let train_loss = totals.mean();
        report.train_loss.push(train_loss);
        report.train_accuracy.push(totals.accuracy());
        let monitored = if valid.is_empty() {
            train_loss
        } else {
            let (v, _) = evaluate(model, valid, cfg.batch_size, &mut step)?;
            if !v.is_finite() {
                return Err(Error::Divergence { epoch, loss: v });
            }
            report.valid_loss.push(v);
            v
        };
        report.epochs_run = epoch;
        log::debug!("epoch {epoch}: train {train_loss:.4} monitored {monitored:.4}");
        if best.as_ref().is_none_or(|(b, _)| monitored < *b) {
            best = Some((monitored, snapshot(model)));
            report.best_epoch = epoch;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= cfg.patience {
                break;
            }
        }
    }
    if let Some((_, values)) = best {
        restore(model, values);
    }
    model.zero_grad();
    report.steps = opt.steps_taken();
    Ok(report)
}

fn snapshot<M: Module>(model: &M) -> Vec<Vec<f64>> {
    model.params().into_iter().map(|p| p.value.clone()).collect()
}

fn restore<M: Module>(model: &mut M, values: Vec<Vec<f64>>) {
    let mut it = values.into_iter();
    model.visit_mut(&mut |p| {
        p.value = it.next().expect("snapshot matches module");
    });
}
