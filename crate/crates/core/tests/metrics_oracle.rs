mod support;

use hxr_core::metrics::{cae, evaluate_set, sum_abs_loss, top_fraction_mae, DEFAULT_FLOOR};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::oracles::{cae_ref, random_pair, sum_abs_ref, top_fraction_ref};

#[test]
fn thousand_random_pairs_match_reference_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let pairs: Vec<_> = (0..1000).map(|_| random_pair(&mut rng, DEFAULT_FLOOR)).collect();
    for (p, g) in &pairs {
        assert_eq!(sum_abs_loss(p, g).unwrap().to_bits(), sum_abs_ref(p, g).to_bits());
        assert_eq!(
            cae(p, g, DEFAULT_FLOOR).unwrap().to_bits(),
            cae_ref(p, g, DEFAULT_FLOOR).to_bits()
        );
        for frac in [0.01, 0.05, 0.5, 1.0] {
            let lib = top_fraction_mae(std::slice::from_ref(p), std::slice::from_ref(g), frac).unwrap();
            let oracle = top_fraction_ref(std::slice::from_ref(p), std::slice::from_ref(g), frac);
            assert_eq!(lib.to_bits(), oracle.to_bits());
        }
    }
    for group in pairs.chunks(10) {
        let preds: Vec<_> = group.iter().map(|(p, _)| p.clone()).collect();
        let gts: Vec<_> = group.iter().map(|(_, g)| g.clone()).collect();
        for frac in [0.01, 0.05] {
            let lib = top_fraction_mae(&preds, &gts, frac).unwrap();
            assert_eq!(lib.to_bits(), top_fraction_ref(&preds, &gts, frac).to_bits());
        }
    }
}

#[test]
fn ground_truth_against_itself_is_all_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gts: Vec<Vec<f64>> = (0..4).map(|_| random_pair(&mut rng, DEFAULT_FLOOR).1).collect();
    let r = evaluate_set(&gts, &gts, DEFAULT_FLOOR).unwrap();
    assert_eq!((r.cae, r.top1_mae, r.top5_mae), (0.0, 0.0, 0.0));
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..200).prop_flat_map(|n| {
        (
            prop::collection::vec(-1.0..3.0f64, n),
            prop::collection::vec(0.0..3.0f64, n),
        )
    })
}

proptest! {
    #[test]
    fn cae_is_symmetric_and_zero_floor_is_sum_abs((p, g) in pair()) {
        prop_assert_eq!(cae(&p, &g, 0.03).unwrap(), cae(&g, &p, 0.03).unwrap());
        let pos: Vec<f64> = p.iter().map(|x| x.abs()).collect();
        prop_assert_eq!(cae(&pos, &g, 0.0).unwrap(), sum_abs_loss(&pos, &g).unwrap());
    }

    #[test]
    fn top_fractions_are_ordered((p, g) in pair()) {
        let one = |f| top_fraction_mae(std::slice::from_ref(&p), std::slice::from_ref(&g), f).unwrap();
        let mean = sum_abs_loss(&p, &g).unwrap() / p.len() as f64;
        prop_assert!(one(0.01) >= one(0.05));
        prop_assert!(one(0.05) >= one(1.0) - 1e-12);
        prop_assert!((one(1.0) - mean).abs() <= 1e-12 * mean.max(1.0));
    }
}
