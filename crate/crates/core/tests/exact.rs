use proptest::prelude::*;
use rumour_core::{DistBackend, ExactEngine, RateConvention, TailSide};

#[test]
fn law_of_large_numbers_and_variance() {
    let engine = ExactEngine::default();
    let (mean, var) = engine.moments(2000).unwrap();
    let c = *engine.constants();
    assert!((mean / 2000.0 - c.x_inf).abs() <= 5e-3);
    assert!((var / 2000.0 / c.sigma2 - 1.0).abs() <= 0.05);
    assert_eq!(engine.moments(1).unwrap(), (0.0, 0.0));
}

#[test]
fn dp_matches_rational_at_50() {
    let engine = ExactEngine::default();
    let r = engine.distribution(50, DistBackend::Rational).unwrap().pmf_vec();
    let d = engine.dp_distribution(50, RateConvention::Formula).unwrap().pmf_vec();
    let worst = r.iter().zip(&d).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-12);
}

#[test]
fn right_tail_contains_endpoint() {
    let engine = ExactEngine::default();
    for n in [100u64, 1000, 100_000, 10_000_000] {
        let b = 2.0;
        let c = engine.constants().x_inf;
        let sqrt_n = (n as f64).sqrt();
        for z in [0.5, 1.0, 3.0] {
            if z * b * sqrt_n > n as f64 * (1.0 - c) - 1.0 {
                continue;
            }
            let right = engine.tail_log_prob(n, z, b, TailSide::Right).unwrap();
            assert!(right >= -2.0 * (n as f64).ln() - 1e-9, "n = {n}, z = {z}");
        }
    }
}

#[test]
fn tails_shrink_with_z() {
    let engine = ExactEngine::default();
    for n in [200u64, 3000, 1_000_000] {
        let mut last = 0.0;
        for z in [0.25, 0.5, 1.0, 2.0] {
            let t = engine.tail_log_prob(n, z, 1.5, TailSide::Both).unwrap();
            assert!(t < last);
            last = t;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn normalized_and_consistent(n in 1u64..=300) {
        let engine = ExactEngine::default();
        let r = engine.distribution(n, DistBackend::Rational).unwrap();
        let f = engine.distribution(n, DistBackend::FloatFormula).unwrap();
        prop_assert!(f.normalization_error().abs() <= 1e-12);
        prop_assert!((r.pmf(n - 1) * (n * n) as f64 - 1.0).abs() <= 1e-15);
        for k in 0..n {
            let (a, b) = (r.pmf(k), f.pmf(k));
            prop_assert!((b / a - 1.0).abs() <= 1e-11, "k = {}", k);
        }
    }
}
