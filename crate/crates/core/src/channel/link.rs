use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::BasebandSignal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathLossModel {
    FreeSpace,
    /// Free-space loss at `reference_m`, then `10·exponent·log10(d/d0)` beyond it.
    LogDistance {
        exponent: f64,
        reference_m: f64,
    },
}

impl Default for PathLossModel {
    fn default() -> Self {
        PathLossModel::LogDistance { exponent: 3.5, reference_m: 100.0 }
    }
}

fn free_space_db(distance_m: f64, carrier_hz: f64) -> f64 {
    20.0 * distance_m.log10() + 20.0 * carrier_hz.log10() - 147.55
}

pub fn path_loss_db(model: PathLossModel, distance_m: f64, carrier_hz: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !(carrier_hz > 0.0) {
        return Err(Error::invalid(format!(
            "path loss needs positive distance and carrier, got {distance_m} m, {carrier_hz} Hz"
        )));
    }
    match model {
        PathLossModel::FreeSpace => Ok(free_space_db(distance_m, carrier_hz)),
        PathLossModel::LogDistance { exponent, reference_m } => {
            if !(reference_m > 0.0) {
                return Err(Error::invalid("reference distance must be positive"));
            }
            Ok(free_space_db(reference_m, carrier_hz) + 10.0 * exponent * (distance_m / reference_m).log10())
        }
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Converts a noise density in dBm/Hz to baseband units per Hz.
pub fn noise_psd_from_dbm_hz(dbm_per_hz: f64) -> f64 {
    dbm_to_mw(dbm_per_hz)
}

/// One node↔BS link.  `noise_psd` is the complex-baseband noise density:
/// a signal sampled at `fs` receives noise of variance `noise_psd·fs` per sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    pub distance_m: f64,
    pub pathloss_model: PathLossModel,
    pub carrier_hz: f64,
    pub fading_gain: Complex64,
    pub noise_psd: f64,
    pub tx_power_dbm: f64,
    pub rx_sensitivity_dbm: f64,
}

impl LinkModel {
    pub fn path_loss_db(&self) -> Result<f64> {
        path_loss_db(self.pathloss_model, self.distance_m, self.carrier_hz)
    }

    /// Mean received power before fading, in dBm.
    pub fn mean_rx_dbm(&self) -> Result<f64> {
        Ok(self.tx_power_dbm - self.path_loss_db()?)
    }

    /// Received amplitude including fading.
    pub fn rx_gain(&self) -> Result<Complex64> {
        Ok(self.fading_gain * dbm_to_mw(self.mean_rx_dbm()?).sqrt())
    }
}

/// Circularly-symmetric complex Gaussian sample of variance `variance`.
pub fn awgn<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    Complex64::new(rng.sample::<f64, _>(StandardNormal) * s, rng.sample::<f64, _>(StandardNormal) * s)
}

/// Rayleigh-magnitude, uniform-phase gain with E|H|² = 1.
pub fn rayleigh_gain<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    awgn(rng, 1.0)
}

/// y = H·√(P_tx/PL)·x + w.
pub fn apply_link(signal: &BasebandSignal, link: &LinkModel, rng_seed: u64) -> Result<BasebandSignal> {
    signal.require_non_empty("signal")?;
    let g = link.rx_gain()?;
    let var = link.noise_psd * signal.sample_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let samples = signal
        .samples
        .iter()
        .map(|&x| {
            let w = if var > 0.0 { awgn(&mut rng, var) } else { Complex64::new(0.0, 0.0) };
            g * x + w
        })
        .collect();
    BasebandSignal::with_t0(samples, signal.sample_rate, signal.t0)
}

/// Multiplies sample n by e^{j2π·δf·n/fs}.
pub fn apply_cfo(signal: &BasebandSignal, delta_f_hz: f64) -> BasebandSignal {
    let w = 2.0 * PI * delta_f_hz / signal.sample_rate;
    BasebandSignal {
        samples: signal
            .samples
            .iter()
            .enumerate()
            .map(|(n, &x)| x * Complex64::from_polar(1.0, w * n as f64))
            .collect(),
        sample_rate: signal.sample_rate,
        t0: signal.t0,
    }
}

/// Sample-wise sum of signals placed at their arrival offsets (seconds,
/// rounded to the nearest sample).  The result starts at offset zero.
pub fn mix_concurrent(signals: &[(BasebandSignal, f64)]) -> Result<BasebandSignal> {
    let Some((first, _)) = signals.first() else {
        return Err(Error::Empty("signal list"));
    };
    let fs = first.sample_rate;
    let mut placed = Vec::with_capacity(signals.len());
    for (s, off) in signals {
        if (s.sample_rate - fs).abs() > 1e-9 * fs {
            return Err(Error::SampleRateMismatch(fs, s.sample_rate));
        }
        if *off < 0.0 {
            return Err(Error::invalid("arrival offsets must be non-negative"));
        }
        placed.push(((off * fs).round() as usize, s));
    }
    let len = placed.iter().map(|(o, s)| o + s.len()).max().unwrap_or(0);
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for (o, s) in placed {
        for (dst, src) in out[o..o + s.len()].iter_mut().zip(&s.samples) {
            *dst += src;
        }
    }
    BasebandSignal::new(out, fs)
}

/// Mean power in dBm, 0 dBm being unit mean power.
pub fn rssi_dbm(signal: &BasebandSignal) -> Result<f64> {
    signal.require_non_empty("signal")?;
    let p = signal.avg_power();
    if p <= 0.0 {
        return Err(Error::ZeroEnergy);
    }
    Ok(mw_to_dbm(p))
}

/// Local-oscillator error of a device.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OscillatorModel {
    pub ppm_error: f64,
    pub drift_per_packet: f64,
}

impl OscillatorModel {
    pub fn new(ppm_error: f64, drift_per_packet: f64, bound_ppm: f64) -> Result<Self> {
        if ppm_error.abs() > bound_ppm {
            return Err(Error::invalid(format!("|{ppm_error}| ppm exceeds the {bound_ppm} ppm bound")));
        }
        Ok(Self { ppm_error, drift_per_packet })
    }

    /// Offset at carrier `f_hz` after `packets` transmissions.
    pub fn offset_hz(&self, f_hz: f64, packets: u64) -> f64 {
        f_hz * (self.ppm_error + self.drift_per_packet * packets as f64) * 1e-6
    }
}
