use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snow_core::atpc::{fit_initial, predict_pdr, select_power, update_intercept};
use snow_core::sim::atpc_closed_loop;
use snow_core::{AtpcModel, PdrSamples, PowerVector, SimConfig};

/// Solves XᵀX·β = Xᵀl with X = [tp 1] by LU.
fn normal_equations(pairs: &[(f64, f64)]) -> (f64, f64) {
    let x = DMatrix::from_fn(pairs.len(), 2, |r, c| if c == 0 { pairs[r].0 } else { 1.0 });
    let l = DVector::from_iterator(pairs.len(), pairs.iter().map(|p| p.1));
    let xt = x.transpose();
    let beta = (&xt * &x).lu().solve(&(&xt * l)).expect("non-singular");
    (beta[0], beta[1])
}

#[test]
fn fit_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let m = rng.random_range(2..=32);
        let pairs: Vec<(f64, f64)> = (0..m).map(|_| (rng.random_range(0..=15) as f64, rng.random::<f64>())).collect();
        if pairs.iter().all(|p| p.0 == pairs[0].0) {
            continue;
        }
        let fit = fit_initial(&PdrSamples::new(pairs.clone()).unwrap(), 0.9).unwrap();
        let (a, b) = normal_equations(&pairs);
        assert!((fit.a_hat - a).abs() < 1e-9 && (fit.b_hat - b).abs() < 1e-9, "{fit:?} vs ({a}, {b})");
    }
}

#[test]
fn sixteen_noisy_levels() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pairs: Vec<(f64, f64)> =
        (0..16).map(|t| (t as f64, (0.05 * t as f64 + 0.2 + rng.random_range(-0.05..0.05)).clamp(0.0, 1.0))).collect();
    let fit = fit_initial(&PdrSamples::new(pairs.clone()).unwrap(), 0.9).unwrap();
    let (a, b) = normal_equations(&pairs);
    assert!((fit.a_hat - a).abs() < 1e-9 && (fit.b_hat - b).abs() < 1e-9);
}

#[test]
fn selection_examples() {
    let levels = PowerVector::default();
    let m = AtpcModel { a_hat: 0.05, b_hat: 0.2, pdr_threshold: 0.9 };
    assert_eq!(select_power(&m, &levels).unwrap(), 14.0);
    let at_intercept = AtpcModel { b_hat: 0.9, ..m };
    assert_eq!(select_power(&at_intercept, &levels).unwrap(), 0.0);
    let far = AtpcModel { a_hat: 0.0175, b_hat: 0.2, pdr_threshold: 0.9 };
    assert_eq!(select_power(&far, &levels).unwrap(), 15.0);
    assert!(select_power(&AtpcModel { a_hat: 0.0, ..m }, &levels).is_err());
}

#[test]
fn prediction_examples() {
    let m = AtpcModel { a_hat: 0.05, b_hat: 0.2, pdr_threshold: 0.9 };
    assert!((predict_pdr(&m, 14.0) - 0.9).abs() < 1e-12);
    assert_eq!(predict_pdr(&m, 40.0), 1.0);
    assert_eq!(predict_pdr(&m, 0.0), 0.2);
    assert_eq!(predict_pdr(&AtpcModel { b_hat: -0.3, ..m }, 0.0), 0.0);
}

#[test]
fn power_vector_validation() {
    assert!(PowerVector::new(vec![1.0]).is_err());
    assert!(PowerVector::new(vec![0.0, 0.0, 1.0]).is_err());
    let v = PowerVector::new(vec![-3.0, 0.0, 5.0]).unwrap();
    assert_eq!(v.nearest(1.0), 0.0);
    assert_eq!(v.nearest(3.0), 5.0);
    assert_eq!(v.nearest(-10.0), -3.0);
}

#[test]
fn closed_loop_converges_on_a_stationary_link() {
    let cfg = SimConfig::default();
    let thr = cfg.atpc.pdr_threshold;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steps = atpc_closed_loop(&cfg, 0.05, 0.2, 0.0, 5, &mut rng).unwrap();
        let hit = steps.iter().position(|s| (s.pdr_true - thr).abs() <= 0.05 + 1e-9);
        assert!(hit.is_some_and(|i| i <= 5), "seed {seed}: {steps:?}");
        assert!(steps.iter().all(|s| s.model.a_hat == steps[0].model.a_hat));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn common_scaling_keeps_the_selection(
        pairs in proptest::collection::vec((0u8..=15, 0.0f64..=1.0), 3..20),
        lambda in 0.05f64..=1.0,
    ) {
        let pairs: Vec<(f64, f64)> = pairs.into_iter().map(|(t, l)| (t as f64, l)).collect();
        prop_assume!(pairs.iter().any(|p| p.0 != pairs[0].0));
        let base = fit_initial(&PdrSamples::new(pairs.clone()).unwrap(), 0.9).unwrap();
        prop_assume!(base.a_hat.abs() > 1e-6);
        let scaled_pairs: Vec<(f64, f64)> = pairs.iter().map(|&(t, l)| (t, l * lambda)).collect();
        let scaled = fit_initial(&PdrSamples::new(scaled_pairs).unwrap(), 0.9 * lambda).unwrap();
        let raw = (0.9 - base.b_hat) / base.a_hat;
        let raw_scaled = (0.9 * lambda - scaled.b_hat) / scaled.a_hat;
        prop_assert!((raw - raw_scaled).abs() <= 1e-6 * raw.abs().max(1.0));
        // Away from rounding midpoints the chosen level is identical.
        prop_assume!((raw - raw.floor() - 0.5).abs() > 1e-6);
        let levels = PowerVector::default();
        prop_assert_eq!(select_power(&base, &levels).unwrap(), select_power(&scaled, &levels).unwrap());
    }

    #[test]
    fn intercept_update_keeps_the_slope(
        a in -0.2f64..0.2, b in -1.0f64..1.0,
        readings in proptest::collection::vec(0.0f64..=1.0, 1..10),
    ) {
        let m = AtpcModel { a_hat: a, b_hat: b, pdr_threshold: 0.9 };
        let w = PdrSamples::new(readings.iter().map(|&l| (5.0, l)).collect()).unwrap();
        let n = update_intercept(&m, &w).unwrap();
        prop_assert_eq!(n.a_hat, a);
        let mean = readings.iter().sum::<f64>() / readings.len() as f64;
        prop_assert!((n.b_hat - (b - (0.9 - mean))).abs() < 1e-12);
    }
}
