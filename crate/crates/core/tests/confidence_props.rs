use hxr_core::confidence::{confidence, saliency, SaliencyMatrix};
use proptest::prelude::*;

fn case() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>)> {
    (1usize..12, 1usize..10).prop_flat_map(|(k, l)| {
        (
            prop::collection::vec(0.0..5.6f64, k),
            prop::collection::vec(prop::collection::vec(0.0..20.0f64, l), k),
        )
    })
}

proptest! {
    #[test]
    fn convex_combination_bounds((h, norms) in case()) {
        let s = saliency(&norms).unwrap();
        let c = confidence(&h, &s).unwrap();
        let hi = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = h.iter().cloned().fold(f64::INFINITY, f64::min);
        for (i, ci) in c.iter().enumerate() {
            prop_assert!(-hi <= *ci && *ci <= -lo, "C_{i} = {ci} outside [{}, {}]", -hi, -lo);
            let col: f64 = s.column(i).iter().sum();
            prop_assert!((col - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_entropy_gives_minus_h0((h, norms) in case(), h0 in 0.0..5.5f64) {
        let s = saliency(&norms).unwrap();
        let c = confidence(&vec![h0; h.len()], &s).unwrap();
        prop_assert!(c.iter().all(|ci| (ci + h0).abs() <= 1e-12));
    }

    #[test]
    fn power_of_two_scaling_is_exact((h, norms) in case(), e in -4i32..5) {
        let s = saliency(&norms).unwrap();
        let c = confidence(&h, &s).unwrap();
        let scale = 2f64.powi(e);
        let scaled: Vec<f64> = h.iter().map(|x| x * scale).collect();
        let cs = confidence(&scaled, &s).unwrap();
        for (a, b) in c.iter().zip(&cs) {
            prop_assert_eq!((a * scale).to_bits(), b.to_bits());
        }
    }

    #[test]
    fn joint_row_permutation_is_invariant((h, norms) in case(), rot in 0usize..12) {
        let s = saliency(&norms).unwrap();
        let c = confidence(&h, &s).unwrap();
        let k = h.len();
        let r = rot % k;
        let h2: Vec<f64> = (0..k).map(|j| h[(j + r) % k]).collect();
        let s2 = SaliencyMatrix { s: (0..k).map(|j| s.s[(j + r) % k].clone()).collect() };
        let c2 = confidence(&h2, &s2).unwrap();
        for (a, b) in c.iter().zip(&c2) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn zero_gradient_column_is_uniform() {
    let norms = vec![vec![0.0, 1.0], vec![0.0, 2.0], vec![0.0, 3.0], vec![0.0, 0.5]];
    let s = saliency(&norms).unwrap();
    assert!(s.column(0).iter().all(|&w| w == 0.25));
    assert!(s.column(1).iter().any(|&w| w != 0.25));
}

#[test]
fn one_dominant_token_saturates() {
    let h = [0.3, 2.0, 4.0];
    let mut last = f64::NAN;
    for big in [10.0, 50.0, 200.0, 700.0] {
        let s = saliency(&[vec![0.1], vec![big], vec![0.2]]).unwrap();
        last = confidence(&h, &s).unwrap()[0];
    }
    assert!((last + 2.0).abs() < 1e-12, "{last}");
}

#[test]
fn one_hot_tokens_give_full_confidence() {
    let s = saliency(&[vec![1.0, 2.0], vec![3.0, 0.0]]).unwrap();
    assert_eq!(confidence(&[0.0, 0.0], &s).unwrap(), vec![0.0, 0.0]);
}
