use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// SNR_loss = 1 + (1/3)(π·δf·T)²·Es/N0.
pub fn snr_loss_factor(delta_f_hz: f64, symbol_period_s: f64, es_over_n0: f64) -> Result<f64> {
    if !(symbol_period_s > 0.0) {
        return Err(Error::invalid("symbol period must be positive"));
    }
    let x = PI * delta_f_hz * symbol_period_s;
    Ok(1.0 + x * x / 3.0 * es_over_n0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrLossMeasurement {
    pub measured: f64,
    pub closed_form: f64,
    /// Gain |g|² and interference-plus-noise power behind `measured`.
    pub signal_power: f64,
    pub impairment_power: f64,
}

/// Monte-Carlo SNR degradation of an `n_subcarriers`-point OFDM symbol of
/// duration `symbol_period_s` with every subcarrier carrying random BPSK,
/// under a carrier offset `delta_f_hz` and AWGN at `es_over_n0` per subcarrier.
///
/// The offset rotates each symbol from phase zero at its start.  After the FFT
/// the common gain g = E[Y·X*] is measured, and the loss is
/// (Es/N0) / (|g|² / E|Y − gX|²).
pub fn measure_snr_loss<R: Rng + ?Sized>(
    delta_f_hz: f64,
    symbol_period_s: f64,
    es_over_n0: f64,
    n_subcarriers: usize,
    n_symbols: usize,
    rng: &mut R,
) -> Result<SnrLossMeasurement> {
    if n_subcarriers < 2 || n_symbols == 0 {
        return Err(Error::invalid("need at least 2 subcarriers and 1 symbol"));
    }
    if !(es_over_n0 > 0.0) {
        return Err(Error::invalid("Es/N0 must be positive"));
    }
    let n = n_subcarriers;
    let fs = n as f64 / symbol_period_s;
    let closed_form = snr_loss_factor(delta_f_hz, symbol_period_s, es_over_n0)?;
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n);
    let fft = planner.plan_fft_forward(n);
    let scale = 1.0 / (n as f64).sqrt();
    let sigma = (0.5 / es_over_n0).sqrt();
    let rot: Vec<Complex64> =
        (0..n).map(|i| Complex64::from_polar(1.0, 2.0 * PI * delta_f_hz * i as f64 / fs)).collect();

    let mut xs = Vec::with_capacity(n * n_symbols);
    let mut ys = Vec::with_capacity(n * n_symbols);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for _ in 0..n_symbols {
        let x: Vec<Complex64> =
            (0..n).map(|_| Complex64::new(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0)).collect();
        buf.copy_from_slice(&x);
        ifft.process(&mut buf);
        for (i, v) in buf.iter_mut().enumerate() {
            let w = Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) * sigma;
            *v = *v * scale * rot[i] + w;
        }
        fft.process(&mut buf);
        xs.extend_from_slice(&x);
        ys.extend(buf.iter().map(|v| v * scale));
    }
    let g: Complex64 = xs.iter().zip(&ys).map(|(x, y)| y * x.conj()).sum::<Complex64>() / xs.len() as f64;
    let imp: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - g * x).norm_sqr()).sum::<f64>() / xs.len() as f64;
    let sinr = g.norm_sqr() / imp;
    Ok(SnrLossMeasurement {
        measured: es_over_n0 / sinr,
        closed_form,
        signal_power: g.norm_sqr(),
        impairment_power: imp,
    })
}
