use initiative_core::sampling::*;
use initiative_core::corpus::DialogueMode;
use proptest::prelude::*;

fn approx(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9)
}

#[test]
fn worked_examples() {
    let d = [0.5, 0.3, 0.15, 0.05];
    assert!(approx(&filter_logits(&d, 2, 0.9), &[0.625, 0.375, 0.0, 0.0]));
    assert!(approx(&filter_logits(&d, 10, 0.5), &[1.0, 0.0, 0.0, 0.0]));
    assert!(approx(&filter_logits(&d, 1, 1.0), &[1.0, 0.0, 0.0, 0.0]));
}

#[test]
fn ties_prefer_lower_ids() {
    let d = [0.25, 0.25, 0.25, 0.25];
    assert_eq!(filter_logits(&d, 2, 1.0), vec![0.5, 0.5, 0.0, 0.0]);
    let d = [0.2, 0.4, 0.4];
    assert_eq!(filter_logits(&d, 1, 1.0), vec![0.0, 1.0, 0.0]);
}

#[test]
fn mode_defaults() {
    let cc = DecodeParams::for_mode(DialogueMode::Chitchat);
    let to = DecodeParams::for_mode(DialogueMode::Taskoriented);
    assert_eq!((cc.top_k, cc.top_p), (5, 0.9));
    assert_eq!((to.top_k, to.top_p), (10, 0.5));
    assert!(DecodeParams { top_k: 0, ..cc }.validate().is_err());
    assert!(DecodeParams { top_p: 0.0, ..cc }.validate().is_err());
    assert!(DecodeParams { top_p: 1.5, ..cc }.validate().is_err());
}

fn dist() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 1..20).prop_filter_map("positive mass", |w| {
        let s: f64 = w.iter().sum();
        (s > 1e-6).then(|| w.iter().map(|x| x / s).collect())
    })
}

proptest! {
    #[test]
    fn output_is_a_distribution_with_bounded_support(d in dist(), k in 1usize..25, p in 0.01f64..=1.0) {
        let f = filter_logits(&d, k, p);
        let sum: f64 = f.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(f.iter().filter(|&&x| x > 0.0).count() <= k);
        prop_assert!(f.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn full_filter_is_identity(d in dist()) {
        let f = filter_logits(&d, d.len(), 1.0);
        // a trailing run of zero-probability entries may be cut before p = 1 is reached
        let ok = d.iter().zip(&f).all(|(a, b)| (a - b).abs() < 1e-9 || *a < 1e-12);
        prop_assert!(ok);
    }

    #[test]
    fn support_is_monotone(d in dist(), k in 1usize..20, dk in 0usize..5, p in 0.01f64..=1.0, dp in 0.0f64..0.5) {
        let small = filter_logits(&d, k, p);
        let large = filter_logits(&d, k + dk, (p + dp).min(1.0));
        for (a, b) in small.iter().zip(&large) {
            prop_assert!(*a == 0.0 || *b > 0.0);
        }
    }
}
