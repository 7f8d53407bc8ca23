//! Automatic metrics and the per-split evaluation report.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::bridge::Generated;
use crate::classifier::classifier_metrics;
use crate::codec::{tokenize, TRANSITION};
use crate::corpus::{Dialogue, DialogueMode, DialogueTurn, GenerationMode, Speaker, TurnKind};
use crate::error::{Error, Result};

/// Epsilon substituted for a zero modified-precision count.
pub const BLEU_EPSILON: f64 = 1e-9;

fn ngrams(tokens: &[String], n: usize) -> impl Iterator<Item = &[String]> {
    tokens.windows(n)
}

/// Distinct n-grams over total n-grams across all texts, in percent.
pub fn distinct_n<S: AsRef<str>>(texts: &[S], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut seen = HashSet::new();
    let mut total = 0usize;
    for t in texts {
        let toks = tokenize(t.as_ref());
        for g in ngrams(&toks, n) {
            seen.insert(g.to_vec());
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::InvalidArgument(format!("no {n}-grams in input")));
    }
    Ok(100.0 * seen.len() as f64 / total as f64)
}

fn counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    for g in ngrams(tokens, n) {
        *m.entry(g).or_insert(0) += 1;
    }
    m
}

/// Sentence BLEU-4 in percent: geometric mean of clipped n-gram precisions
/// for n = 1..4 times the brevity penalty against the closest reference
/// length (shorter wins ties). Zero match counts become [`BLEU_EPSILON`].
pub fn bleu4<S: AsRef<str>>(hypothesis: &str, references: &[S]) -> Result<f64> {
    let hyp = tokenize(hypothesis);
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r.as_ref())).collect();
    if hyp.is_empty() || refs.is_empty() || refs.iter().all(Vec::is_empty) {
        return Err(Error::InvalidArgument("BLEU needs a hypothesis and a reference".into()));
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let h = counts(&hyp, n);
        let total: usize = h.values().sum();
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in &refs {
            for (g, c) in counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let matched: usize = h
            .iter()
            .map(|(g, c)| (*c).min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let precision = if matched == 0 {
            BLEU_EPSILON / total.max(1) as f64
        } else {
            matched as f64 / total as f64
        };
        log_sum += precision.ln();
    }
    let c = hyp.len() as f64;
    let r = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&l| ((l as i64 - hyp.len() as i64).abs(), l))
        .expect("non-empty") as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    Ok(100.0 * bp * (log_sum / 4.0).exp())
}

/// Percent of sequences containing at least one `[TRANSITION]`.
pub fn transition_accuracy<S: AsRef<[usize]>>(outputs: &[S]) -> Result<f64> {
    if outputs.is_empty() {
        return Err(Error::InvalidArgument("no transition-turn outputs".into()));
    }
    let hits = outputs.iter().filter(|o| o.as_ref().contains(&TRANSITION)).count();
    Ok(100.0 * hits as f64 / outputs.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub split: String,
    pub metrics: BTreeMap<String, Option<f64>>,
    pub null_reasons: BTreeMap<String, String>,
    pub seed: u64,
}

impl EvalReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied().flatten()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// What a model produced for one gold system turn.
#[derive(Clone, Debug)]
pub struct TurnOutput {
    pub generated: Generated,
    /// Predicted generation mode, for models that predict one.
    pub predicted: Option<GenerationMode>,
}

/// Per-turn seed derived from the base seed, dialogue id and turn index.
pub fn turn_seed(base: u64, dialogue: &str, turn: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ base;
    for b in dialogue.bytes().chain((turn as u64).to_le_bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn set(r: &mut EvalReport, name: &str, value: Result<f64>, reason: &str) {
    match value {
        Ok(v) => {
            r.metrics.insert(name.into(), Some(v));
        }
        Err(_) => {
            r.metrics.insert(name.into(), None);
            r.null_reasons.insert(name.into(), reason.into());
        }
    }
}

/// Runs `respond(history, gold_turn, seed)` for every system turn of
/// `dialogues` and scores the outputs. Chit-chat turns feed Distinct-n,
/// task-oriented turns feed BLEU-4 against the gold text, and transition
/// turns additionally feed transition accuracy and transition BLEU-4.
pub fn evaluate_suite<F>(model: &str, split: &str, dialogues: &[Dialogue], seed: u64, mut respond: F) -> Result<EvalReport>
where
    F: FnMut(&[DialogueTurn], &DialogueTurn, u64) -> Result<TurnOutput>,
{
    if dialogues.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut chit = Vec::new();
    let mut bleu = Vec::new();
    let mut transition_raw = Vec::new();
    let mut transition_bleu = Vec::new();
    let mut spurious = Vec::new();
    let (mut pc, mut gc, mut pt, mut gt) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for d in dialogues {
        for (i, gold) in d.turns.iter().enumerate() {
            if gold.speaker != Speaker::System {
                continue;
            }
            let out = respond(&d.turns[..i], gold, turn_seed(seed, &d.id, i))?;
            let normal = out.generated.response.normal_part.clone();
            match gold.mode {
                DialogueMode::Chitchat => chit.push(normal.clone()),
                DialogueMode::Taskoriented => bleu.push(bleu4(&normal, &[&gold.text]).unwrap_or(0.0)),
            }
            if gold.is_transition_turn {
                transition_raw.push(out.generated.tokens.clone());
                let reference = gold.transition_sentence.as_deref().unwrap_or_default();
                let score = match &out.generated.response.transition_part {
                    Some(t) => bleu4(t, &[reference]).unwrap_or(0.0),
                    None => 0.0,
                };
                transition_bleu.push(score);
            } else {
                spurious.push(out.generated.tokens.clone());
            }
            if let Some(m) = out.predicted {
                pc.push(m.ccto.index());
                gc.push(gold.mode.index());
                pt.push(m.ttnt.index());
                gt.push(if gold.is_transition_turn {
                    TurnKind::Transition.index()
                } else {
                    TurnKind::Normal.index()
                });
            }
        }
    }
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            Err(Error::EmptyBatch)
        } else {
            Ok(xs.iter().sum::<f64>() / xs.len() as f64)
        }
    };
    let mut r = EvalReport {
        model: model.into(),
        split: split.into(),
        metrics: BTreeMap::new(),
        null_reasons: BTreeMap::new(),
        seed,
    };
    let no_cc = "no chit-chat turns or no n-grams in the chit-chat outputs";
    set(&mut r, "distinct1", distinct_n(&chit, 1), no_cc);
    set(&mut r, "distinct2", distinct_n(&chit, 2), no_cc);
    set(&mut r, "bleu4", mean(&bleu), "no task-oriented turns");
    set(&mut r, "bleu4_transition", mean(&transition_bleu), "no transition turns");
    set(&mut r, "transition_accuracy", transition_accuracy(&transition_raw), "no transition turns");
    set(
        &mut r,
        "spurious_transition_rate",
        transition_accuracy(&spurious),
        "no normal turns",
    );
    for name in ["meteor", "bertscore"] {
        r.metrics.insert(name.into(), None);
        r.null_reasons.insert(name.into(), "requires external resources".into());
    }
    if !pc.is_empty() {
        let c = classifier_metrics(&pc, &gc, false)?;
        let t = classifier_metrics(&pt, &gt, true)?;
        for (prefix, m) in [("ccto", c), ("ttnt", t)] {
            r.metrics.insert(format!("{prefix}_accuracy"), Some(m.accuracy));
            r.metrics.insert(format!("{prefix}_precision"), Some(m.precision));
            r.metrics.insert(format!("{prefix}_recall"), Some(m.recall));
            r.metrics.insert(format!("{prefix}_f1"), Some(m.f1));
        }
    }
    Ok(r)
}
