use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snow_core::channel::{apply_cfo, awgn, doppler_shift_hz, MobilityState};
use snow_core::estimation::{
    estimate_cfo_coarse, estimate_cfo_fine, estimate_csi, estimate_csi_from_bits, measure_snr_loss,
    ppm_and_subcarrier_cfo, proactive_correction, snr_loss_factor, PreambleSplit,
};
use snow_core::mac::{join, join_preamble_stream, BsState, JoinRequest, JOIN_LONG_BITS, JOIN_SHORT_BITS};
use snow_core::phy::packet::preamble_sync_bits;
use snow_core::phy::{modulate, BasebandSignal, ModulationScheme, SpectrumPlan};
use snow_core::sim::csi_error;
use snow_core::Error;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// A tone of `n` samples at `offset_hz`, split into short and long parts.
fn tone_split(offset_hz: f64, short: usize, long: usize, fs: f64) -> PreambleSplit {
    let s = BasebandSignal::new(vec![c(1.0, 0.0); short + long], fs).unwrap();
    PreambleSplit::from_signal(&apply_cfo(&s, offset_hz), short, long).unwrap()
}

fn join_split(plan: &SpectrumPlan, offset_hz: f64, psd: f64, rng: &mut ChaCha8Rng) -> PreambleSplit {
    let req = JoinRequest::new(0, offset_hz, c(1.0, 0.0), psd);
    let stream = join_preamble_stream(plan, &req, rng).unwrap();
    let spb = (stream.sample_rate / req.symbol_rate).round() as usize;
    PreambleSplit::from_signal(&stream, JOIN_SHORT_BITS * spb, JOIN_LONG_BITS * spb).unwrap()
}

#[test]
fn coarse_estimate_of_pure_tones() {
    let fs = 800e3;
    assert!(estimate_cfo_coarse(&tone_split(0.0, 64, 192, fs)).unwrap().abs() < 1e-9);
    for f in [500.0, -500.0] {
        let est = estimate_cfo_coarse(&tone_split(f, 64, 192, fs)).unwrap();
        assert!((est - f).abs() < 1e-6 * f.abs(), "{est}");
    }
}

#[test]
fn fine_equals_coarse_when_nothing_is_left() {
    let split = tone_split(750.0, 64, 192, 800e3);
    let coarse = estimate_cfo_coarse(&split).unwrap();
    let fine = estimate_cfo_fine(&split, coarse).unwrap();
    assert!((fine - coarse).abs() < 1e-6);
}

#[test]
fn coarse_is_ambiguous_beyond_its_range() {
    let fs = 800e3;
    // Half-lag of 32 samples: unambiguous below 800e3 / 64 = 12.5 kHz.
    let split = tone_split(13e3, 64, 192, fs);
    match estimate_cfo_coarse(&split) {
        Err(Error::Ambiguous { .. }) => {}
        Ok(v) => assert!((v - 13e3).abs() > 1e3, "aliased estimate expected, got {v}"),
        Err(e) => panic!("{e}"),
    }
    let zero = PreambleSplit { short_part: vec![c(0.0, 0.0); 8], long_part: vec![c(0.0, 0.0); 8], sample_rate: fs };
    assert!(matches!(estimate_cfo_coarse(&zero), Err(Error::ZeroEnergy)));
}

#[test]
fn join_preamble_recovers_offsets_across_20_ppm() {
    let plan = SpectrumPlan::default();
    let f_join = plan.center_hz(plan.join_index);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for ppm in [-20.0, -12.5, -3.0, 0.5, 7.0, 15.0, 20.0] {
        let offset = ppm * 1e-6 * f_join;
        let split = join_split(&plan, offset, 0.0, &mut rng);
        let fine = estimate_cfo_fine(&split, estimate_cfo_coarse(&split).unwrap()).unwrap();
        assert!((fine - offset).abs() <= 1e-6 * offset.abs().max(1.0), "{ppm} ppm: {fine} vs {offset}");
    }
}

#[test]
fn ppm_extrapolation() {
    let plan = SpectrumPlan::default();
    let est = ppm_and_subcarrier_cfo(0.0, 505e6, &plan).unwrap();
    assert!(est.per_subcarrier_hz.values().all(|&v| v == 0.0));

    let est = ppm_and_subcarrier_cfo(5050.0, 505e6, &plan).unwrap();
    assert!((est.ppm_bs - 10.0).abs() < 1e-12);
    for (&id, &v) in &est.per_subcarrier_hz {
        assert!((v - plan.center_hz(id) * 1e-5).abs() < 1e-9);
    }
    assert!((500e6 * est.ppm_bs * 1e-6 - 5000.0).abs() < 1e-9);

    let f_join = plan.center_hz(plan.join_index);
    let est = ppm_and_subcarrier_cfo(1234.5, f_join, &plan).unwrap();
    assert_eq!(est.for_subcarrier(plan.join_index), 1234.5);
    assert!(ppm_and_subcarrier_cfo(1.0, 0.0, &plan).is_err());
}

#[test]
fn proactive_correction_cancels_channel_offset() {
    let fs = 800e3;
    let s = BasebandSignal::new(vec![c(1.0, 0.0); 512], fs).unwrap();
    assert_eq!(proactive_correction(&s, 0.0, 0.0), s);
    let sent = proactive_correction(&s, 5000.0, 0.0);
    let received = apply_cfo(&sent, 5000.0);
    let split = PreambleSplit::from_signal(&received, 128, 384).unwrap();
    let residual = estimate_cfo_fine(&split, estimate_cfo_coarse(&split).unwrap()).unwrap();
    assert!(residual.abs() < 10.0, "{residual}");
}

#[test]
fn doppler_is_a_common_shift() {
    let plan = SpectrumPlan::default();
    let f_join = plan.center_hz(plan.join_index);
    let mob = MobilityState { velocity_mps: 8.94, angle_theta_rad: Some(0.0), delta_s_m: 0.0, range_r_m: 600.0 };
    let at_join = doppler_shift_hz(&mob, f_join).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let split = join_split(&plan, at_join, 0.0, &mut rng);
    let fine = estimate_cfo_fine(&split, estimate_cfo_coarse(&split).unwrap()).unwrap();
    let est = ppm_and_subcarrier_cfo(fine, f_join, &plan).unwrap();
    for id in plan.data_subcarriers() {
        let truth = doppler_shift_hz(&mob, plan.center_hz(id)).unwrap();
        assert!((est.for_subcarrier(id) - truth).abs() < 1.0);
    }
    // Residual after a loop that also pre-rotates 20 mph toward the BS.
    let s = BasebandSignal::new(vec![c(1.0, 0.0); 4096], 800e3).unwrap();
    let f_i = plan.center_hz(1);
    let fd = doppler_shift_hz(&mob, f_i).unwrap();
    let rx = apply_cfo(&proactive_correction(&s, 0.0, fd), fd);
    let split = PreambleSplit::from_signal(&rx, 1024, 3072).unwrap();
    let residual = estimate_cfo_fine(&split, estimate_cfo_coarse(&split).unwrap()).unwrap();
    assert!(residual.abs() < 1.0);
}

#[test]
fn ten_ppm_node_join_feedback() {
    let plan = SpectrumPlan::default();
    let f_join = plan.center_hz(plan.join_index);
    let mut bs = BsState::new(&plan);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let req = JoinRequest::new(0, 10e-6 * f_join, c(1.0, 0.0), 1e-12);
    let r = join(&mut bs, &plan, &req, &mut rng).unwrap();
    let f_i = plan.center_hz(r.subcarrier);
    assert!((r.delta_f_i - f_i * 1e-5).abs() < 10.0, "{} vs {}", r.delta_f_i, f_i * 1e-5);
    // The pre-corrected uplink arrives with the true offset minus the feedback.
    let residual = f_i * 1e-5 - r.delta_f_i;
    assert!(residual.abs() < 10.0);
}

#[test]
fn csi_noiseless_and_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p: Vec<Complex64> = (0..64).map(|_| c(if rng.random() { 1.0 } else { -1.0 }, 0.0)).collect();
    let h = Complex64::from_polar(0.5, std::f64::consts::FRAC_PI_4);
    let y: Vec<Complex64> = p.iter().map(|x| h * x).collect();
    let est = estimate_csi(&y, &p, 4).unwrap();
    assert!((est.h_gain - h).norm() < 1e-9);
    assert!(est.noise_covariance < 1e-20);
    assert!((estimate_csi(&p, &p, 8).unwrap().h_gain - c(1.0, 0.0)).norm() < 1e-12);
}

#[test]
fn csi_rejects_bad_shapes() {
    let p = vec![c(1.0, 0.0); 10];
    assert!(estimate_csi(&p, &p, 3).is_err());
    assert!(estimate_csi(&p, &p[..8], 2).is_err());
    assert!(matches!(estimate_csi(&p, &[c(0.0, 0.0); 10], 2), Err(Error::ZeroEnergy)));
}

#[test]
fn csi_from_known_preamble_bits() {
    let scheme = ModulationScheme::uplink_default();
    let bits = preamble_sync_bits();
    let h = c(-0.3, 0.9);
    let rx = modulate(&bits, scheme, 0.0, 20e3, 112e3).unwrap().scaled(h);
    let est = estimate_csi_from_bits(&rx, &bits, scheme, 4).unwrap();
    assert!((est.h_gain - h).norm() < 1e-9);
}

/// Ĥ = P⁺·y with the segments stacked into one column, through nalgebra's SVD.
fn pseudo_inverse_oracle(y: &[Complex64], p: &[Complex64], parts: usize) -> Complex64 {
    let seg = p.len() / parts;
    let pm = DMatrix::from_fn(p.len(), 1, |r, _| p[(r % seg) + (r / seg) * seg]);
    let ym = DMatrix::from_fn(y.len(), 1, |r, _| y[r]);
    let pinv = pm.pseudo_inverse(1e-15).unwrap();
    (pinv * ym)[(0, 0)]
}

#[test]
fn csi_matches_stacked_pseudo_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let parts = rng.random_range(1..=8);
        let len = parts * rng.random_range(2..=16);
        let p: Vec<Complex64> = (0..len).map(|_| awgn(&mut rng, 1.0)).collect();
        let h = awgn(&mut rng, 1.0);
        let y: Vec<Complex64> = p.iter().map(|x| h * x + awgn(&mut rng, 0.1)).collect();
        let est = estimate_csi(&y, &p, parts).unwrap().h_gain;
        let oracle = pseudo_inverse_oracle(&y, &p, parts);
        assert!((est - oracle).norm() < 1e-9, "{est} vs {oracle}");
    }
}

#[test]
fn csi_error_shrinks_with_preamble_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let short = csi_error(10.0, 32, 4, 10_000, &mut rng).unwrap();
    let long = csi_error(10.0, 64, 4, 10_000, &mut rng).unwrap();
    let ratio = long / short;
    assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.05, "{ratio}");
}

#[test]
fn snr_loss_closed_form_values() {
    assert_eq!(snr_loss_factor(0.0, 1e-3, 10.0).unwrap(), 1.0);
    let t = 1e-3;
    let df = 0.1 / (std::f64::consts::PI * t);
    assert!((snr_loss_factor(df, t, 100.0).unwrap() - 4.0 / 3.0).abs() < 1e-12);
    let l1 = snr_loss_factor(df, t, 10.0).unwrap() - 1.0;
    let l2 = snr_loss_factor(2.0 * df, t, 10.0).unwrap() - 1.0;
    assert!((l2 / l1 - 4.0).abs() < 1e-12);
    assert!(snr_loss_factor(1.0, 0.0, 1.0).is_err());
}

#[test]
fn measured_snr_loss_without_offset_is_near_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = measure_snr_loss(0.0, 1e-3, 10.0, 64, 400, &mut rng).unwrap();
    assert!((m.measured - 1.0).abs() < 0.05, "{}", m.measured);
    assert_eq!(m.closed_form, 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noiseless_offsets_are_recovered(ppm in -20.0f64..20.0) {
        let plan = SpectrumPlan::default();
        let offset = ppm * 1e-6 * plan.center_hz(plan.join_index);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let split = join_split(&plan, offset, 0.0, &mut rng);
        let fine = estimate_cfo_fine(&split, estimate_cfo_coarse(&split).unwrap()).unwrap();
        prop_assert!((fine - offset).abs() <= 1e-6 * offset.abs().max(1.0));
    }

    #[test]
    fn per_subcarrier_offsets_are_proportional(fine in -1e4f64..1e4) {
        let plan = SpectrumPlan::default();
        let f_join = plan.center_hz(plan.join_index);
        let est = ppm_and_subcarrier_cfo(fine, f_join, &plan).unwrap();
        for (&id, &v) in &est.per_subcarrier_hz {
            let expect = plan.center_hz(id) * (fine / f_join);
            prop_assert!((v - expect).abs() <= 1e-12 * expect.abs().max(1e-300));
        }
    }

    #[test]
    fn csi_is_exact_without_noise(re in -3.0f64..3.0, im in -3.0f64..3.0, parts in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<Complex64> = (0..parts * 8).map(|_| awgn(&mut rng, 1.0)).collect();
        let h = c(re, im);
        let y: Vec<Complex64> = p.iter().map(|x| h * x).collect();
        prop_assert!((estimate_csi(&y, &p, parts).unwrap().h_gain - h).norm() < 1e-9);
    }
}
