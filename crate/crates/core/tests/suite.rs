use initiative_core::bridge::{split_transition, Generated};
use initiative_core::codec::{build_vocab, Vocab, TRANSITION};
use initiative_core::corpus::{load_corpus, Dialogue, DialogueTurn, GenerationMode, TurnKind};
use initiative_core::eval::{evaluate_suite, TurnOutput};

fn fixture() -> (Vec<Dialogue>, Vocab) {
    let ds = load_corpus(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/fig2.jsonl")).unwrap();
    let vocab = build_vocab(&ds, 1).unwrap();
    (ds, vocab)
}

fn echo(vocab: &Vocab, gold: &DialogueTurn, with_transition: bool) -> TurnOutput {
    let mut tokens = vocab.encode(&gold.text);
    if with_transition {
        tokens.push(TRANSITION);
        tokens.extend(vocab.encode(gold.transition_sentence.as_deref().unwrap_or("ok")));
    }
    TurnOutput {
        generated: Generated {
            response: split_transition(&tokens, vocab),
            tokens,
            truncated: false,
        },
        predicted: Some(GenerationMode::new(
            gold.mode,
            if gold.is_transition_turn { TurnKind::Transition } else { TurnKind::Normal },
        )),
    }
}

#[test]
fn gold_echo_scores_perfectly() {
    let (ds, vocab) = fixture();
    let r = evaluate_suite("oracle", "test", &ds, 1, |_, gold, _| Ok(echo(&vocab, gold, gold.is_transition_turn))).unwrap();
    assert_eq!(r.metric("transition_accuracy"), Some(100.0));
    assert_eq!(r.metric("spurious_transition_rate"), Some(0.0));
    assert_eq!(r.metric("bleu4_transition"), Some(100.0));
    assert_eq!(r.metric("ccto_accuracy"), Some(100.0));
    assert_eq!(r.metric("ttnt_f1"), Some(100.0));
    assert!(r.metric("bleu4").unwrap() > 0.0);
    assert!(r.metric("distinct1").unwrap() > 0.0);
    assert_eq!(r.metrics["meteor"], None);
    assert_eq!(r.null_reasons["bertscore"], "requires external resources");
    let back: initiative_core::eval::EvalReport = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(back, r);
}

#[test]
fn never_transitioning_scores_zero() {
    let (ds, vocab) = fixture();
    let r = evaluate_suite("plain", "test", &ds, 1, |_, gold, _| {
        let mut o = echo(&vocab, gold, false);
        o.predicted = None;
        Ok(o)
    })
    .unwrap();
    assert_eq!(r.metric("transition_accuracy"), Some(0.0));
    assert_eq!(r.metric("bleu4_transition"), Some(0.0));
    assert!(!r.metrics.contains_key("ccto_accuracy"));
}

#[test]
fn always_transitioning_is_spurious() {
    let (ds, vocab) = fixture();
    let r = evaluate_suite("eager", "test", &ds, 1, |_, gold, _| Ok(echo(&vocab, gold, true))).unwrap();
    assert_eq!(r.metric("transition_accuracy"), Some(100.0));
    assert_eq!(r.metric("spurious_transition_rate"), Some(100.0));
}

#[test]
fn responder_sees_history_and_distinct_seeds() {
    let (ds, vocab) = fixture();
    let mut seen = Vec::new();
    evaluate_suite("probe", "test", &ds, 9, |h, gold, seed| {
        assert!(!h.is_empty());
        seen.push(seed);
        Ok(echo(&vocab, gold, false))
    })
    .unwrap();
    let mut uniq = seen.clone();
    uniq.sort();
    uniq.dedup();
    assert_eq!(uniq.len(), seen.len());
    assert!(evaluate_suite("x", "test", &[], 1, |_, g, _| Ok(echo(&vocab, g, false))).is_err());
}
