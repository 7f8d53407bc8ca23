use initiative_core::codec::*;
use initiative_core::corpus::*;
use initiative_core::synth::gen_synthetic_corpus;
use proptest::prelude::*;
use sha2::{Digest, Sha256};

fn fig2() -> Vec<Dialogue> {
    parse_corpus(include_str!("fixtures/fig2.jsonl")).unwrap()
}

fn one_turn(text: &str) -> Vec<Dialogue> {
    vec![Dialogue {
        id: "x".into(),
        kind: DialogueKind::Plain,
        split: Split::Train,
        domains: Default::default(),
        turns: vec![DialogueTurn::user(text, DialogueMode::Chitchat)],
    }]
}

fn render(v: &Vocab, ids: &[usize]) -> String {
    v.decode(ids)
}

#[test]
fn vocab_of_one_turn() {
    let v = build_vocab(&one_turn("Hi there"), 1).unwrap();
    assert_eq!(v.len(), SPECIALS.len() + 2);
    assert_eq!(&v.tokens()[..SPECIALS.len()], SPECIALS.map(String::from).as_slice());
    assert!(v.get("hi").is_some() && v.get("there").is_some());
}

#[test]
fn min_freq_boundary() {
    let v = build_vocab(&one_turn("a a b"), 2).unwrap();
    assert_eq!(v.get("a"), Some(SPECIALS.len()));
    assert_eq!(v.get("b"), None);
    assert_eq!(v.encode("b a"), vec![UNK, SPECIALS.len()]);
}

#[test]
fn ordering_is_frequency_then_lexicographic() {
    let v = build_vocab(&one_turn("c b b a a z"), 1).unwrap();
    let words: Vec<_> = v.tokens()[SPECIALS.len()..].to_vec();
    assert_eq!(words, ["a", "b", "c", "z"]);
}

#[test]
fn empty_corpus_and_zero_min_freq_fail() {
    assert!(build_vocab(&[], 1).is_err());
    assert!(build_vocab(&one_turn("x"), 0).is_err());
}

#[test]
fn identical_corpora_give_identical_vocab_bytes() {
    let a = build_vocab(&gen_synthetic_corpus(5, 50), 1).unwrap().to_json();
    let b = build_vocab(&gen_synthetic_corpus(5, 50), 1).unwrap().to_json();
    assert_eq!(Sha256::digest(a.as_bytes()), Sha256::digest(b.as_bytes()));
    let v = Vocab::from_json(&a).unwrap();
    assert_eq!(v.to_json(), a);
    assert!(a.starts_with("{\"[PAD]\":0,\"[UNK]\":1,\"[USER]\":2"));
}

#[test]
fn vocab_file_roundtrip_and_rejections() {
    let v = build_vocab(&fig2(), 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("vocab.json");
    v.save(&p).unwrap();
    assert_eq!(Vocab::load(&p).unwrap(), v);
    assert!(Vocab::from_json("{\"[PAD]\":0,\"x\":1}").is_err());
    assert!(Vocab::from_json("{\"[PAD]\":0,\"x\":5}").is_err());
}

#[test]
fn serialize_police_act() {
    let acts = vec![DialogueAct {
        domain: "police".into(),
        act: "inform".into(),
        slots: vec![("post".into(), "CB11JG".into())],
    }];
    assert_eq!(serialize_acts(&acts), "police{inform(post=CB11JG)}");
    assert_eq!(serialize_acts(&[]), "");
    assert_eq!(parse_acts("").unwrap(), vec![]);
    assert!(parse_acts("police{inform(post)}").is_err());
    assert!(parse_acts("police").is_err());
}

fn act_strategy() -> impl Strategy<Value = DialogueAct> {
    let word = "[a-z][a-z0-9_]{0,6}";
    let value = "[a-zA-Z0-9?][a-zA-Z0-9 ?:]{0,10}";
    (word, word, prop::collection::vec((word, value), 0..3)).prop_map(|(d, a, slots)| {
        let mut seen = std::collections::HashSet::new();
        DialogueAct {
            domain: d,
            act: a,
            slots: slots.into_iter().filter(|(n, _)| seen.insert(n.clone())).collect(),
        }
    })
}

proptest! {
    #[test]
    fn acts_roundtrip(acts in prop::collection::vec(act_strategy(), 0..3)) {
        prop_assert_eq!(parse_acts(&serialize_acts(&acts)).unwrap(), acts);
    }

    #[test]
    fn decode_inverts_encode(words in prop::collection::vec("[a-z]{1,5}|[.,?!;']", 1..12)) {
        let text = words.join(" ");
        let v = build_vocab(&one_turn(&text), 1).unwrap();
        let ids = v.encode(&text);
        prop_assert!(!ids.contains(&UNK));
        prop_assert_eq!(v.decode(&ids), tokenize(&text).join(" "));
    }
}

#[test]
fn two_acts_two_slots_roundtrip() {
    let acts = vec![
        DialogueAct {
            domain: "train".into(),
            act: "inform".into(),
            slots: vec![("day".into(), "monday".into()), ("dest".into(), "london kings cross".into())],
        },
        DialogueAct {
            domain: "hotel".into(),
            act: "request".into(),
            slots: vec![("area".into(), "?".into()), ("stars".into(), "4".into())],
        },
    ];
    let s = serialize_acts(&acts);
    assert_eq!(s, "train{inform(day=monday, dest=london kings cross)} hotel{request(area=?, stars=4)}");
    assert_eq!(parse_acts(&s).unwrap(), acts);
}

#[test]
fn unified_chitchat_rendering() {
    let ds = fig2();
    let v = build_vocab(&ds, 1).unwrap();
    let ex = make_lm_examples(&ds, Stage::Unified).unwrap();
    let (input, target) = render_lm_input(&ex[0], &v, false, 128).unwrap();
    assert_eq!(
        render(&v, &input),
        "[USER] i will be enrolling in a new school at london kings cross next week . i ' m so nervous . [SYSTEM]"
    );
    assert_eq!(render(&v, &target), "i hope you have fun at your new school . [END]");
}

#[test]
fn discrete_task_transition_rendering() {
    let ds = fig2();
    let v = build_vocab(&ds, 1).unwrap();
    let ex = make_lm_examples(&ds, Stage::Prompted).unwrap();
    let police = ex
        .iter()
        .find(|e| e.dialogue_id == "fig2-appended" && e.generation_mode.ttnt == TurnKind::Transition)
        .unwrap();
    let (input, target) = render_lm_input(police, &v, true, 128).unwrap();
    assert_eq!(
        render(&v, &input),
        "[TASK-ORIENTED] [TRANSITION-TURN] [USER] do you know where the parkside police station is ? police { inform ( post = cb11jg ) } [SYSTEM]"
    );
    assert_eq!(
        render(&v, &target),
        "hello , i can provide the post code for you ; it is cb11jg . [TRANSITION] what happened to you ? [END]"
    );
    let (plain_input, _) = render_lm_input(police, &v, false, 128).unwrap();
    assert_eq!(plain_input, input[2..].to_vec());
}

#[test]
fn prompt_and_transition_token_placement() {
    let ds = gen_synthetic_corpus(11, 60);
    let v = build_vocab(&ds, 1).unwrap();
    for stage in [Stage::Unified, Stage::Prompted, Stage::Bridge] {
        for ex in make_lm_examples(&ds, stage).unwrap() {
            for discrete in [false, true] {
                let (input, target) = render_lm_input(&ex, &v, discrete, 128).unwrap();
                let prompt_positions: Vec<usize> = input
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| [CHIT_CHAT, TASK_ORIENTED, TRANSITION_TURN, NORMAL_TURN].contains(t))
                    .map(|(i, _)| i)
                    .collect();
                if discrete {
                    assert_eq!(prompt_positions, vec![0, 1]);
                    assert_eq!(input[..2], prompt_tokens(ex.generation_mode));
                } else {
                    assert!(prompt_positions.is_empty());
                }
                assert_eq!(*input.last().unwrap(), SYSTEM);
                assert_eq!(*target.last().unwrap(), END);
                assert_eq!(
                    target.contains(&TRANSITION),
                    ex.generation_mode.ttnt == TurnKind::Transition
                );
            }
        }
    }
}

#[test]
fn oldest_context_is_truncated_first() {
    let ds = fig2();
    let v = build_vocab(&ds, 1).unwrap();
    let ex = make_lm_examples(&ds, Stage::Prompted).unwrap();
    let (full_in, full_t) = render_lm_input(&ex[0], &v, true, 256).unwrap();
    let max = full_t.len() + 10;
    let (input, target) = render_lm_input(&ex[0], &v, true, max).unwrap();
    assert_eq!(target, full_t);
    assert_eq!(input.len() + target.len(), max);
    assert_eq!(input[..2], full_in[..2]);
    assert_eq!(input[2..], full_in[full_in.len() - 8..]);
    assert!(render_lm_input(&ex[0], &v, true, full_t.len() + 2).is_err());
}

#[test]
fn classifier_rendering() {
    let v = build_vocab(&one_turn("hi there"), 1).unwrap();
    let hi = DialogueTurn::user("hi", DialogueMode::Chitchat);
    assert_eq!(render_classifier_input(&[hi.clone()], &v), vec![CLS, v.id("hi")]);
    let there = DialogueTurn::system("there", DialogueMode::Chitchat);
    let two = render_classifier_input(&[hi, there], &v);
    assert_eq!(two.iter().filter(|&&t| t == SEP).count(), 1);
    assert_eq!(two, vec![CLS, v.id("hi"), SEP, v.id("there")]);

    let long = DialogueTurn::user(vec!["hi"; 300].join(" "), DialogueMode::Chitchat);
    let ids = render_classifier_input(&[long], &v);
    assert_eq!(ids.len(), CLASSIFIER_MAX_LEN);
    assert_eq!(ids[0], CLS);
}
