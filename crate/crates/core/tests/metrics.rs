use initiative_core::classifier::classifier_metrics;
use initiative_core::codec::{END, TRANSITION};
use initiative_core::eval::*;
use proptest::prelude::*;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 5e-5
}

#[test]
fn distinct_hand_counts() {
    assert!(close(distinct_n(&["a b a"], 1).unwrap(), 200.0 / 3.0));
    assert_eq!(distinct_n(&["a"], 1).unwrap(), 100.0);
    assert_eq!(distinct_n(&["a b", "a b"], 1).unwrap(), 50.0);
    assert_eq!(distinct_n(&["a b"], 1).unwrap(), 100.0);
    assert_eq!(distinct_n(&["a b a b"], 2).unwrap(), 200.0 / 3.0);
    assert!(distinct_n(&["a"], 2).is_err());
    assert!(distinct_n::<&str>(&[], 1).is_err());
}

#[test]
fn bleu_identity_and_floor() {
    let s = "hello , i can provide the post code for you";
    assert_eq!(bleu4(s, &[s]).unwrap(), 100.0);
    assert!(bleu4("alpha beta gamma delta", &["one two three four"]).unwrap() < 0.01);
    assert!(bleu4("", &["x"]).is_err());
    assert!(bleu4::<&str>("x", &[]).is_err());
}

#[test]
fn bleu_ten_token_pair() {
    let hyp = "the quick brown fox jumps over the lazy sleeping dog";
    let reference = "the quick brown fox leaps over the lazy dog today";
    // clipped matches: unigrams 8/10, bigrams 5/9, trigrams 3/8, 4-grams 1/7; equal lengths so BP = 1
    let expected = 100.0 * (8.0 / 10.0 * 5.0 / 9.0 * 3.0 / 8.0 * 1.0 / 7.0_f64).powf(0.25);
    let got = bleu4(hyp, &[reference]).unwrap();
    assert!(close(got, expected), "{got} vs {expected}");
    assert!(close(got, 39.2815));
}

#[test]
fn bleu_brevity_penalty_and_asymmetry() {
    let short = "the quick brown fox";
    let long = "the quick brown fox leaps over the lazy dog today";
    let expected = 100.0 * (1.0_f64 - 10.0 / 4.0).exp();
    assert!(close(bleu4(short, &[long]).unwrap(), expected));
    assert_ne!(bleu4(short, &[long]).unwrap(), bleu4(long, &[short]).unwrap());
}

#[test]
fn bleu_uses_closest_reference_length() {
    let hyp = "a b c d e";
    let r = bleu4(hyp, &["a b c d e f g h i j", "a b c d e f"]).unwrap();
    let expected = 100.0 * (1.0_f64 - 6.0 / 5.0).exp();
    assert!(close(r, expected));
}

#[test]
fn transition_accuracy_counts_presence() {
    assert_eq!(transition_accuracy(&[vec![TRANSITION, 20], vec![20, TRANSITION]]).unwrap(), 100.0);
    assert_eq!(transition_accuracy(&[vec![20, TRANSITION], vec![20, END]]).unwrap(), 50.0);
    assert_eq!(
        transition_accuracy(&[vec![TRANSITION, 30]]).unwrap(),
        transition_accuracy(&[vec![30, TRANSITION, 31]]).unwrap()
    );
    assert!(transition_accuracy::<Vec<usize>>(&[]).is_err());
}

#[test]
fn classifier_metrics_hand_cases() {
    let m = classifier_metrics(&[0, 1, 1], &[0, 1, 1], true).unwrap();
    assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (100.0, 100.0, 100.0, 100.0));

    let m = classifier_metrics(&[0, 0, 0, 0], &[0, 0, 1, 1], true).unwrap();
    assert_eq!(m.accuracy, 50.0);
    assert_eq!(m.precision, 25.0);
    assert_eq!(m.recall, 50.0);
    assert!(m.zero_division);

    let golds = [0, 0, 1, 1];
    let preds = [0, 1, 1, 0];
    let w = classifier_metrics(&preds, &golds, true).unwrap();
    let u = classifier_metrics(&preds, &golds, false).unwrap();
    assert_eq!((w.precision, w.recall, w.f1), (u.precision, u.recall, u.f1));
    assert!(classifier_metrics(&[], &[], true).is_err());
    assert!(classifier_metrics(&[0], &[0, 1], true).is_err());
}

#[test]
fn turn_seeds_differ_by_turn_and_dialogue() {
    assert_eq!(turn_seed(1, "a", 3), turn_seed(1, "a", 3));
    assert_ne!(turn_seed(1, "a", 3), turn_seed(1, "a", 5));
    assert_ne!(turn_seed(1, "a", 3), turn_seed(1, "b", 3));
    assert_ne!(turn_seed(1, "a", 3), turn_seed(2, "a", 3));
}

proptest! {
    #[test]
    fn distinct_is_order_invariant(mut texts in prop::collection::vec("[a-c]( [a-c]){0,4}", 1..6), n in 1usize..3) {
        let a = distinct_n(&texts, n);
        texts.reverse();
        let b = distinct_n(&texts, n);
        match (a, b) {
            (Ok(x), Ok(y)) => { prop_assert_eq!(x, y); prop_assert!(x > 0.0 && x <= 100.0); }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false),
        }
    }

    #[test]
    fn weighted_equals_macro_on_balanced_gold(k in 1usize..6, errs in 0usize..6) {
        let errs = errs.min(k);
        let golds: Vec<usize> = std::iter::repeat_n(0, k).chain(std::iter::repeat_n(1, k)).collect();
        let mut preds = golds.clone();
        for i in 0..errs {
            preds[i] = 1;
            preds[k + i] = 0;
        }
        let w = classifier_metrics(&preds, &golds, true).unwrap();
        let u = classifier_metrics(&preds, &golds, false).unwrap();
        prop_assert!((w.f1 - u.f1).abs() < 1e-9);
        prop_assert!((w.precision - u.precision).abs() < 1e-9);
        prop_assert!((w.recall - w.accuracy).abs() < 1e-9);
    }
}
