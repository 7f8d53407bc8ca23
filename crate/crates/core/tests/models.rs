use initiative_core::bridge::*;
use initiative_core::checkpoints::*;
use initiative_core::classifier::*;
use initiative_core::codec::*;
use initiative_core::corpus::{DialogueMode, GenerationMode, Split, Stage, TurnKind};
use initiative_core::lm::*;
use initiative_core::sampling::*;
use initiative_core::synth::gen_synthetic_corpus;
use initiative_core::train::*;
use initiative_core::Error;
use initiative_nn::gradcheck::check_module;
use initiative_nn::{cross_entropy, Checkpoint, ForwardMode, ModelConfig, Module, Param};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GRAD_TOL: f64 = 1e-4;

fn cfg(vocab: usize, e: usize, max_len: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: vocab,
        embed_dim: e,
        layers: 2,
        heads: 4,
        ff_dim: 2 * e,
        max_seq_len: max_len,
        dropout: 0.1,
    }
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        lr: 1e-3,
        batch_size: 8,
        max_epochs: epochs,
        patience: 100,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn world() -> (Vec<initiative_core::corpus::Dialogue>, Vocab) {
    let ds = gen_synthetic_corpus(5, 12);
    let vocab = build_vocab(&ds, 1).unwrap();
    (ds, vocab)
}

fn nll(logits: &Array2<f64>, gold: &[usize]) -> f64 {
    let mut s = 0.0;
    for (r, &g) in gold.iter().enumerate() {
        let row = logits.row(r);
        let m = row.iter().cloned().fold(f64::MIN, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        s += lse - row[g];
    }
    s / gold.len() as f64
}

#[test]
fn classifier_loss_is_the_sum_of_both_heads() {
    let (ds, vocab) = world();
    let data = classifier_data(&ds, Split::Train, &vocab);
    let mut clf = Classifier::new(&cfg(vocab.len(), 16, CLASSIFIER_MAX_LEN), 1).unwrap();
    let batch: Vec<&LabeledHistory> = data.iter().take(6).collect();
    let l = classifier_loss(&mut clf, &batch, &mut ForwardMode::Eval, false).unwrap();
    let tokens: Vec<&[usize]> = batch.iter().map(|b| b.tokens.as_slice()).collect();
    let f = clf.forward(&tokens, &mut ForwardMode::Eval).unwrap();
    let yc: Vec<usize> = batch.iter().map(|b| b.ccto.index()).collect();
    let yt: Vec<usize> = batch.iter().map(|b| b.ttnt.index()).collect();
    assert!((l.ccto - nll(&f.logits_ccto, &yc)).abs() < 1e-9);
    assert!((l.ttnt - nll(&f.logits_ttnt, &yt)).abs() < 1e-9);
    assert!((l.total - l.ccto - l.ttnt).abs() < 1e-9);
}

#[test]
fn uniform_heads_cost_two_ln_two() {
    let (ds, vocab) = world();
    let data = classifier_data(&ds, Split::Train, &vocab);
    let mut clf = Classifier::new(&cfg(vocab.len(), 16, CLASSIFIER_MAX_LEN), 1).unwrap();
    clf.visit_mut(&mut |p: &mut Param| {
        if p.name().starts_with("ccto.out") || p.name().starts_with("ttnt.out") {
            p.value.iter_mut().for_each(|v| *v = 0.0);
        }
    });
    let batch: Vec<&LabeledHistory> = data.iter().take(4).collect();
    let l = classifier_loss(&mut clf, &batch, &mut ForwardMode::Eval, true).unwrap();
    assert!((l.total - 2.0 * 2f64.ln()).abs() < 1e-12);
    let grads: Vec<f64> = clf
        .params()
        .iter()
        .filter(|p| p.name() == "ccto.out.weight" || p.name() == "ttnt.out.weight")
        .map(|p| p.grad.iter().map(|g| g.abs()).sum())
        .collect();
    assert!(grads.iter().all(|&g| g > 0.0), "{grads:?}");
}

#[test]
fn classifier_gradients_match_finite_differences() {
    let (ds, vocab) = world();
    let data = classifier_data(&ds, Split::Train, &vocab);
    let short: Vec<LabeledHistory> = data
        .iter()
        .map(|h| LabeledHistory {
            tokens: h.tokens[..h.tokens.len().min(14)].to_vec(),
            ..h.clone()
        })
        .take(3)
        .collect();
    let mut clf = Classifier::new(&cfg(vocab.len(), 16, CLASSIFIER_MAX_LEN), 2).unwrap();
    let report = check_module(&mut clf, 1e-5, 4, 1, |m, g| {
        let batch: Vec<&LabeledHistory> = short.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        classifier_loss(m, &batch, &mut ForwardMode::Train(&mut rng), g).unwrap().total
    });
    assert!(report.max_rel_error < GRAD_TOL, "{report:?}");
}

#[test]
fn unified_loss_gradients_match_finite_differences() {
    let (ds, vocab) = world();
    let seqs = lm_sequences(&ds, Split::Train, Stage::Unified, &vocab, false, 24).unwrap();
    let mut dec = new_decoder(&cfg(vocab.len(), 16, 24), 4).unwrap();
    let report = check_module(&mut dec, 1e-5, 3, 2, |m, g| {
        let batch: Vec<&LmSeq> = seqs.iter().take(2).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        unified_loss(m, &batch, &mut ForwardMode::Train(&mut rng), g).unwrap().loss
    });
    assert!(report.max_rel_error < GRAD_TOL, "{report:?}");
}

struct Frozen {
    clf: Classifier,
    dec: initiative_nn::Decoder,
    items: Vec<BridgeItem>,
}

fn frozen_world(max_len: usize) -> (Frozen, Vocab) {
    let (ds, vocab) = world();
    let mut clf = Classifier::new(&cfg(vocab.len(), 16, CLASSIFIER_MAX_LEN), 6).unwrap();
    let mut dec = new_decoder(&cfg(vocab.len(), 16, max_len), 7).unwrap();
    clf.set_trainable(false);
    dec.set_trainable(false);
    let items = bridge_data(&clf, &ds, Split::Train, &vocab, max_len).unwrap();
    (Frozen { clf, dec, items }, vocab)
}

#[test]
fn bridge_gradients_match_finite_differences() {
    let (mut w, _) = frozen_world(40);
    let mut bridge = Bridge::new(BridgeConfig::new(16), 8);
    // spread weights and biases so ReLU pre-activations sit far from the kink
    let mut init = initiative_nn::ParamInit::with_std(8, 0.5);
    bridge.visit_mut(&mut |p: &mut Param| init.fill_normal(&mut p.value));
    let items: Vec<&BridgeItem> = w.items.iter().take(2).collect();
    let report = check_module(&mut bridge, 1e-5, 5, 3, |b, g| {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        bridge_loss(b, &mut w.dec, &items, &mut ForwardMode::Train(&mut rng), g).unwrap().total
    });
    assert!(report.max_rel_error < GRAD_TOL, "{report:?}");
    assert!(report.checked > 20);
}

#[test]
fn bridge_loss_adds_response_and_prompt_terms() {
    let (mut w, _) = frozen_world(40);
    let mut bridge = Bridge::new(BridgeConfig::new(16), 8);
    let items: Vec<&BridgeItem> = w.items.iter().take(3).collect();
    let l = bridge_loss(&mut bridge, &mut w.dec, &items, &mut ForwardMode::Eval, false).unwrap();
    assert!((l.total - l.response - l.ccto - l.ttnt).abs() < 1e-12);
    assert!(l.ccto > 0.0 && l.ttnt > 0.0 && l.response > 0.0);
}

#[test]
fn bridge_training_leaves_backbones_untouched() {
    let (ds, vocab) = world();
    let mut clf = Classifier::new(&cfg(vocab.len(), 16, CLASSIFIER_MAX_LEN), 6).unwrap();
    let mut dec = new_decoder(&cfg(vocab.len(), 16, 48), 7).unwrap();
    let (c0, d0) = (clf.digest(), dec.digest());
    let (bridge, report) = train_bridge(&mut clf, &mut dec, &ds, &vocab, &quick(2)).unwrap();
    assert_eq!(report.epochs_run, 2);
    assert_eq!(clf.digest(), c0);
    assert_eq!(dec.digest(), d0);
    assert!(bridge.params().iter().all(|p| p.trainable));
    assert_ne!(bridge.digest(), Bridge::new(BridgeConfig::new(16), 3).digest());
}

#[test]
fn unfrozen_backbones_are_refused() {
    let (ds, vocab) = world();
    let clf = Classifier::new(&cfg(vocab.len(), 16, CLASSIFIER_MAX_LEN), 6).unwrap();
    assert!(matches!(
        bridge_data(&clf, &ds, Split::Train, &vocab, 40),
        Err(Error::UnfrozenBackbone(_))
    ));
    let (mut w, _) = frozen_world(40);
    w.dec.set_trainable(true);
    let mut bridge = Bridge::new(BridgeConfig::new(16), 8);
    let items: Vec<&BridgeItem> = w.items.iter().take(1).collect();
    assert!(matches!(
        bridge_loss(&mut bridge, &mut w.dec, &items, &mut ForwardMode::Eval, false),
        Err(Error::UnfrozenBackbone(_))
    ));
}

#[test]
fn width_mismatch_is_refused() {
    let (ds, vocab) = world();
    let mut clf = Classifier::new(&cfg(vocab.len(), 16, CLASSIFIER_MAX_LEN), 6).unwrap();
    let mut dec = new_decoder(&cfg(vocab.len(), 24, 48), 7).unwrap();
    assert!(matches!(
        train_bridge(&mut clf, &mut dec, &ds, &vocab, &quick(1)),
        Err(Error::CheckpointMismatch(_))
    ));
}

#[test]
fn ccto_prompt_ignores_the_ttnt_vector() {
    let bridge = Bridge::new(BridgeConfig::new(16), 8);
    let mut rng = initiative_nn::ParamInit::new(1);
    let mut a = vec![0.0; 3 * 16];
    let mut b = vec![0.0; 3 * 16];
    let mut b2 = vec![0.0; 3 * 16];
    rng.fill_normal(&mut a);
    rng.fill_normal(&mut b);
    rng.fill_normal(&mut b2);
    let m = |v: Vec<f64>| Array2::from_shape_vec((3, 16), v).unwrap();
    let f1 = bridge.forward(&m(a.clone()), &m(b), &mut ForwardMode::Eval).unwrap();
    let f2 = bridge.forward(&m(a), &m(b2), &mut ForwardMode::Eval).unwrap();
    assert_eq!(f1.cp_ccto, f2.cp_ccto);
    assert_ne!(f1.cp_ttnt, f2.cp_ttnt);
}

#[test]
fn bridge_checkpoint_is_pinned_to_its_backbones() {
    let (w, vocab) = frozen_world(40);
    let bridge = Bridge::new(BridgeConfig::new(16), 8);
    let r = FitReport::default();
    let cc = classifier_checkpoint(&w.clf, &vocab, 6, &r).unwrap();
    let dc = decoder_checkpoint(DISCRETE, &w.dec, &vocab, 7, &r).unwrap();
    let bc = bridge_checkpoint(&bridge, 8, &r, &cc, &dc).unwrap();
    let back = Checkpoint::from_bytes(&bc.to_bytes().unwrap()).unwrap();
    let loaded = load_bridge(&back, &cc, &dc).unwrap();
    assert_eq!(loaded.digest(), bridge.digest());

    let other = new_decoder(&cfg(vocab.len(), 16, 40), 99).unwrap();
    let oc = decoder_checkpoint(DISCRETE, &other, &vocab, 99, &r).unwrap();
    assert!(matches!(load_bridge(&back, &cc, &oc), Err(Error::CheckpointMismatch(_))));
    assert!(matches!(load_bridge(&back, &dc, &dc), Err(Error::CheckpointMismatch(_))));
    assert!(matches!(load_decoder(&dc, &[UNIFIED]), Err(Error::CheckpointMismatch(_))));
    let (d2, v2) = load_decoder(&dc, &[DISCRETE]).unwrap();
    assert_eq!(d2.digest(), w.dec.digest());
    assert_eq!(v2, vocab);
}

#[test]
fn prompt_embeddings_equal_to_token_rows_reproduce_discrete_logits() {
    let (ds, vocab) = world();
    let dec = new_decoder(&cfg(vocab.len(), 16, 64), 7).unwrap();
    let seqs = lm_sequences(&ds, Split::Train, Stage::Prompted, &vocab, true, 64).unwrap();
    let seq = &seqs[0];
    let e = 16;
    let emb = &dec.token_embedding().value;
    let (a, b) = (seq.tokens[0], seq.tokens[1]);
    assert!(PROMPT_TOKENS.contains(&a) && PROMPT_TOKENS.contains(&b));
    let rows = [[&emb[a * e..(a + 1) * e], &emb[b * e..(b + 1) * e]]];
    let plain = lm_forward(&dec, &[seq], None, &mut ForwardMode::Eval).unwrap();
    let over = lm_forward(&dec, &[seq], Some(&rows), &mut ForwardMode::Eval).unwrap();
    assert_eq!(plain.stats.loss, over.stats.loss);
    assert_eq!(plain.cache.hidden(), over.cache.hidden());
}

#[test]
fn init_discrete_redraws_only_prompt_rows() {
    let (_, vocab) = world();
    let u = new_decoder(&cfg(vocab.len(), 16, 32), 7).unwrap();
    let d = init_discrete(&u, 1);
    let e = 16;
    let (ue, de) = (&u.token_embedding().value, &d.token_embedding().value);
    for t in 0..vocab.len() {
        let same = ue[t * e..(t + 1) * e] == de[t * e..(t + 1) * e];
        assert_eq!(same, !PROMPT_TOKENS.contains(&t), "token {t}");
    }
}

#[test]
fn training_is_deterministic() {
    let (ds, vocab) = world();
    let m = cfg(vocab.len(), 16, 48);
    let (a, ra) = train_unified(&ds, &vocab, &m, &quick(2)).unwrap();
    let (b, rb) = train_unified(&ds, &vocab, &m, &quick(2)).unwrap();
    assert_eq!(a.digest(), b.digest());
    assert_eq!(ra, rb);
    let (c, _) = train_unified(&ds, &vocab, &m, &TrainConfig { seed: 4, ..quick(2) }).unwrap();
    assert_ne!(a.digest(), c.digest());

    let ctx = [USER, vocab.id("hello"), SYSTEM];
    let p = DecodeParams::chitchat().with_seed(17);
    assert_eq!(sample_response(&a, &ctx, None, &p).unwrap(), sample_response(&b, &ctx, None, &p).unwrap());
}

#[test]
fn sample_response_limits() {
    let (_, vocab) = world();
    let dec = new_decoder(&cfg(vocab.len(), 16, 8), 7).unwrap();
    let zero = DecodeParams {
        max_new_tokens: 0,
        ..DecodeParams::chitchat()
    };
    let s = sample_response(&dec, &[USER, SYSTEM], None, &zero).unwrap();
    assert!(s.tokens.is_empty() && !s.truncated);
    assert!(matches!(sample_response(&dec, &[], None, &zero), Err(Error::Overlength { .. })));
    assert!(sample_response(&dec, &[USER; 8], None, &zero).is_err());
    let long = DecodeParams {
        max_new_tokens: 100,
        ..DecodeParams::greedy()
    };
    let s = sample_response(&dec, &[USER, SYSTEM], None, &long).unwrap();
    assert!(s.tokens.len() <= 7);
}

#[test]
fn split_transition_cases() {
    let mut tokens: Vec<String> = SPECIALS.iter().map(|t| t.to_string()).collect();
    tokens.extend(["hello".to_string(), "police".to_string()]);
    let vocab = Vocab::from_tokens(tokens).unwrap();
    let hi = vocab.id("hello");
    let ok = vocab.id("police");
    let r = split_transition(&[hi, TRANSITION, ok], &vocab);
    assert_eq!(r.normal_part, "hello");
    assert_eq!(r.transition_part.as_deref(), Some("police"));
    assert!(!r.degenerate);
    let r = split_transition(&[TRANSITION, ok], &vocab);
    assert!(r.degenerate && r.normal_part.is_empty());
    let r = split_transition(&[hi, TRANSITION, ok, TRANSITION, hi], &vocab);
    assert_eq!(r.transition_part.as_deref(), Some("police hello"));
    let r = split_transition(&[hi, CHIT_CHAT, ok], &vocab);
    assert_eq!((r.normal_part.as_str(), r.transition_part), ("hello police", None));
}

#[test]
fn decode_table_follows_mode() {
    let t = DecodeTable::default();
    assert_eq!(t.get(DialogueMode::Chitchat).top_k, 5);
    assert_eq!(t.get(DialogueMode::Taskoriented).top_p, 0.5);
    let _ = GenerationMode::new(DialogueMode::Chitchat, TurnKind::Transition);
}

struct Scalar(Param);

impl Module for Scalar {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        f(&self.0);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.0);
    }
}

#[test]
fn early_stopping_restores_the_best_epoch() {
    // train pulls w towards 3, valid prefers w = 0.5
    let train: Vec<f64> = vec![3.0; 4];
    let valid: Vec<f64> = vec![0.5];
    let mut m = Scalar(Param::zeros("w", &[1]));
    let cfg = TrainConfig {
        lr: 0.2,
        batch_size: 4,
        max_epochs: 50,
        patience: 1,
        seed: 0,
        weight_decay: 0.0,
        clip_norm: None,
    };
    let step = |m: &mut Scalar, b: &[&f64], _: &mut ForwardMode<'_>, g: bool| {
        let w = m.0.value[0];
        let loss: f64 = b.iter().map(|&&t| (w - t).powi(2)).sum::<f64>() / b.len() as f64;
        if g {
            m.0.grad[0] += b.iter().map(|&&t| 2.0 * (w - t)).sum::<f64>() / b.len() as f64;
        }
        Ok(BatchStats { loss, count: b.len(), correct: 0 })
    };
    let r = fit(&mut m, &train, &valid, &cfg, step).unwrap();
    assert_eq!(r.epochs_run, r.best_epoch + 1);
    assert!(r.epochs_run < 50);
    let best = r.valid_loss[r.best_epoch - 1];
    assert!(r.valid_loss.iter().all(|&v| v >= best));
    let w = m.0.value[0];
    assert!(((w - 0.5).powi(2) - best).abs() < 1e-12);
}

#[test]
fn divergence_aborts_training() {
    let mut m = Scalar(Param::zeros("w", &[1]));
    let data = vec![0.0; 2];
    let r = fit(&mut m, &data, &[], &quick(3), |_, b, _, _| {
        Ok(BatchStats { loss: f64::NAN, count: b.len(), correct: 0 })
    });
    assert!(matches!(r, Err(Error::Divergence { epoch: 1, .. })));
}

#[test]
fn cross_entropy_oracle_matches() {
    let logits = Array2::from_shape_vec((1, 3), vec![1.0, 2.0, 0.5]).unwrap();
    let ce = cross_entropy(&logits, &[1], &[true]).unwrap();
    assert!((ce.loss - nll(&logits, &[1])).abs() < 1e-12);
}

