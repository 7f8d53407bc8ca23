//! The staged commands. Each returns a JSON summary for stdout and writes
//! its artifacts under the output directory.

use std::path::{Path, PathBuf};

use initiative_core::bridge::{generate_discrete, generate_unified, train_bridge, train_discrete};
use initiative_core::checkpoints::{self, bridge_checkpoint, classifier_checkpoint, decoder_checkpoint, load_classifier, load_decoder};
use initiative_core::classifier::{classifier_data, classifier_report, train_classifier};
use initiative_core::codec::{build_vocab, Vocab};
use initiative_core::corpus::{
    corpus_stats, load_corpus, save_corpus, split_of, validate_augmentation, Dialogue, GenerationMode, Split, TurnKind,
};
use initiative_core::eval::{evaluate_suite, EvalReport, TurnOutput};
use initiative_core::lm::{lm_sequences, token_accuracy, train_unified};
use initiative_core::corpus::Stage;
use initiative_core::synth::gen_synthetic_corpus;
use serde_json::{json, Value};

use crate::config::{self, RunConfig};
use crate::engine::{load_checkpoint, ModelKind, Models};
use crate::error::{CliError, CliResult};

/// Refuses to write into an output directory a server is reading from.
pub fn ensure_not_served(out: &Path) -> CliResult<()> {
    let lock = out.join(config::SERVE_LOCK);
    if lock.exists() {
        return Err(CliError::Locked(out.display().to_string()));
    }
    Ok(())
}

fn create_out(cfg: &RunConfig) -> CliResult<()> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    ensure_not_served(&cfg.out)
}

fn write(path: PathBuf, text: &str) -> CliResult<PathBuf> {
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializes") + "\n"
}

pub fn gen_data(cfg: &RunConfig, n: usize) -> CliResult<Value> {
    if n == 0 {
        return Err(CliError::Config("--n must be positive".into()));
    }
    create_out(cfg)?;
    let ds = gen_synthetic_corpus(cfg.seed, n);
    let path = cfg.corpus_path();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    save_corpus(&path, &ds)?;
    Ok(json!({ "command": "gen-data", "corpus": path, "dialogues": ds.len(), "seed": cfg.seed }))
}

fn read_corpus(cfg: &RunConfig) -> CliResult<Vec<Dialogue>> {
    let path = cfg.corpus_path();
    if !path.exists() {
        return Err(CliError::MissingPrerequisite {
            artifact: path.display().to_string(),
            command: "gen-data",
        });
    }
    Ok(load_corpus(&path)?)
}

/// Validates the corpus, then writes the vocabulary and corpus statistics.
pub fn prepare(cfg: &RunConfig) -> CliResult<Value> {
    create_out(cfg)?;
    let ds = read_corpus(cfg)?;
    let violations: Vec<_> = ds.iter().flat_map(validate_augmentation).collect();
    if !violations.is_empty() {
        return Err(CliError::InvalidCorpus(
            serde_json::to_string(&violations).expect("violations serialize"),
        ));
    }
    let vocab = build_vocab(&ds, cfg.vocab.min_freq)?;
    let vocab_path = cfg.path(config::VOCAB);
    vocab.save(&vocab_path)?;
    let stats = corpus_stats(&ds);
    let stats_path = write(cfg.path(config::STATS), &pretty(&stats))?;
    Ok(json!({
        "command": "prepare",
        "vocab": vocab_path,
        "vocab_size": vocab.len(),
        "stats": stats_path,
        "dialogues": stats.total,
    }))
}

fn prepared(cfg: &RunConfig) -> CliResult<(Vec<Dialogue>, Vocab)> {
    let ds = read_corpus(cfg)?;
    let path = cfg.path(config::VOCAB);
    if !path.exists() {
        return Err(CliError::MissingPrerequisite {
            artifact: path.display().to_string(),
            command: "prepare",
        });
    }
    Ok((ds, Vocab::load(&path)?))
}

fn same_vocab(found: &Vocab, expected: &Vocab) -> CliResult<()> {
    if found != expected {
        return Err(initiative_core::Error::CheckpointMismatch(
            "checkpoint vocabulary differs from vocab.json; rerun the earlier stages".into(),
        )
        .into());
    }
    Ok(())
}

pub fn train_unified_cmd(cfg: &RunConfig) -> CliResult<Value> {
    create_out(cfg)?;
    let (ds, vocab) = prepared(cfg)?;
    let t = &cfg.train.unified;
    let model_cfg = cfg.decoder.with_vocab(vocab.len());
    let (mut decoder, report) = train_unified(&ds, &vocab, &model_cfg, t)?;
    let train = lm_sequences(&ds, Split::Train, Stage::Unified, &vocab, false, model_cfg.max_seq_len)?;
    let acc = token_accuracy(&mut decoder, &train)?;
    let path = cfg.path(config::UNIFIED_CKPT);
    decoder_checkpoint(checkpoints::UNIFIED, &decoder, &vocab, t.seed, &report)?.save(&path)?;
    Ok(json!({ "command": "train-unified", "checkpoint": path, "fit": report, "train_token_accuracy": acc }))
}

fn metrics_split(ds: &[Dialogue]) -> Split {
    [Split::Test, Split::Valid]
        .into_iter()
        .find(|&s| ds.iter().any(|d| d.split == s))
        .unwrap_or(Split::Train)
}

pub fn train_classifier_cmd(cfg: &RunConfig) -> CliResult<Value> {
    create_out(cfg)?;
    let (ds, vocab) = prepared(cfg)?;
    let t = &cfg.train.classifier;
    let (clf, report) = train_classifier(&ds, &vocab, &cfg.encoder.with_vocab(vocab.len()), t)?;
    let path = cfg.path(config::CLASSIFIER_CKPT);
    classifier_checkpoint(&clf, &vocab, t.seed, &report)?.save(&path)?;
    let split = metrics_split(&ds);
    let metrics = classifier_report(&clf, &classifier_data(&ds, split, &vocab))?;
    let body = json!({ "split": split.as_str(), "ccto": metrics.ccto, "ttnt": metrics.ttnt });
    let metrics_path = write(cfg.path(config::CLASSIFIER_METRICS), &pretty(&body))?;
    Ok(json!({ "command": "train-classifier", "checkpoint": path, "metrics": metrics_path, "fit": report, "report": body }))
}

pub fn train_discrete_cmd(cfg: &RunConfig, ablation: bool) -> CliResult<Value> {
    create_out(cfg)?;
    let (ds, vocab) = prepared(cfg)?;
    let uck = load_checkpoint(&cfg.path(config::UNIFIED_CKPT), "train-unified")?;
    let (unified, uv) = load_decoder(&uck, &[checkpoints::UNIFIED])?;
    same_vocab(&uv, &vocab)?;
    let t = &cfg.train.discrete;
    let (decoder, report) = train_discrete(&unified, &ds, &vocab, t, !ablation)?;
    let (kind, file) = if ablation {
        (checkpoints::DISCRETE_ABLATION, config::ABLATION_CKPT)
    } else {
        (checkpoints::DISCRETE, config::DISCRETE_CKPT)
    };
    let path = cfg.path(file);
    decoder_checkpoint(kind, &decoder, &vocab, t.seed, &report)?.save(&path)?;
    Ok(json!({ "command": "train-discrete", "ablation": ablation, "checkpoint": path, "fit": report }))
}

pub fn train_bridge_cmd(cfg: &RunConfig) -> CliResult<Value> {
    create_out(cfg)?;
    let (ds, vocab) = prepared(cfg)?;
    let dck = load_checkpoint(&cfg.path(config::DISCRETE_CKPT), "train-discrete")?;
    let cck = load_checkpoint(&cfg.path(config::CLASSIFIER_CKPT), "train-classifier")?;
    let (mut decoder, dv) = load_decoder(&dck, &[checkpoints::DISCRETE])?;
    let (mut clf, cv) = load_classifier(&cck)?;
    same_vocab(&dv, &vocab)?;
    same_vocab(&cv, &vocab)?;
    let t = &cfg.train.bridge;
    let (bridge, report) = train_bridge(&mut clf, &mut decoder, &ds, &vocab, t)?;
    let path = cfg.path(config::BRIDGE_CKPT);
    bridge_checkpoint(&bridge, t.seed, &report, &cck, &dck)?.save(&path)?;
    Ok(json!({ "command": "train-bridge", "checkpoint": path, "fit": report }))
}

/// Scores one model on `split`. The discrete model is driven by the gold
/// mode; `ablation` evaluates its prompt-stripped twin instead.
pub fn evaluate_cmd(cfg: &RunConfig, model: ModelKind, split: Split, ablation: bool) -> CliResult<(Value, EvalReport)> {
    if ablation && model != ModelKind::Discrete {
        return Err(CliError::Config("--ablation applies to the discrete model".into()));
    }
    let ds = read_corpus(cfg)?;
    let part = split_of(&ds, split);
    if part.is_empty() {
        return Err(initiative_core::Error::EmptyCorpus.into());
    }
    let name = if ablation { "discrete-ablation" } else { model.as_str() };
    let report = if ablation {
        let ck = load_checkpoint(&cfg.path(config::ABLATION_CKPT), "train-discrete --ablation")?;
        let (d, vocab) = load_decoder(&ck, &[checkpoints::DISCRETE_ABLATION])?;
        evaluate_suite(name, split.as_str(), &part, cfg.seed, |h, gold, seed| {
            let mode = gold_mode(gold);
            let params = cfg.decode.get(mode.ccto).with_seed(seed);
            Ok(TurnOutput {
                generated: generate_discrete(&d, &vocab, h, mode, &params, false)?,
                predicted: None,
            })
        })?
    } else {
        let models = Models::load(cfg, &[model])?;
        evaluate_suite(name, split.as_str(), &part, cfg.seed, |h, gold, seed| {
            let mode = gold_mode(gold);
            let params = cfg.decode.get(mode.ccto).with_seed(seed);
            let out = match model {
                ModelKind::Unified => TurnOutput {
                    generated: generate_unified(models.unified.as_ref().expect("loaded"), &models.vocab, h, &params)?,
                    predicted: None,
                },
                ModelKind::Discrete => TurnOutput {
                    generated: generate_discrete(models.discrete.as_ref().expect("loaded"), &models.vocab, h, mode, &params, true)?,
                    predicted: None,
                },
                ModelKind::Continuous => {
                    let r = models
                        .respond(model, h, mode, seed)
                        .map_err(|e| initiative_core::Error::InvalidArgument(e.to_string()))?;
                    TurnOutput {
                        generated: r.generated,
                        predicted: r.mode,
                    }
                }
            };
            Ok(out)
        })?
    };
    let path = write(cfg.path(&format!("eval_{name}_{}.json", split.as_str())), &(report.to_json() + "\n"))?;
    Ok((json!({ "command": "evaluate", "report": path, "metrics": report.metrics }), report))
}

fn gold_mode(gold: &initiative_core::corpus::DialogueTurn) -> GenerationMode {
    let ttnt = if gold.is_transition_turn {
        TurnKind::Transition
    } else {
        TurnKind::Normal
    };
    GenerationMode::new(gold.mode, ttnt)
}
