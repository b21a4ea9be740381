use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;

use crate::channel::apply_cfo;
use crate::error::{Error, Result};
use crate::phy::{BasebandSignal, SpectrumPlan, SubcarrierId};

/// The received preamble cut into a short part and a long part.  Each part is
/// two identical back-to-back halves, so the lag between the halves is the
/// delay δt of the delayed-copy product.
#[derive(Debug, Clone, PartialEq)]
pub struct PreambleSplit {
    pub short_part: Vec<Complex64>,
    pub long_part: Vec<Complex64>,
    pub sample_rate: f64,
}

impl PreambleSplit {
    /// Cuts `signal` at `short_len` samples; the long part takes the next `long_len`.
    pub fn from_signal(signal: &BasebandSignal, short_len: usize, long_len: usize) -> Result<Self> {
        if signal.len() < short_len + long_len {
            return Err(Error::invalid(format!(
                "preamble of {} samples shorter than {short_len}+{long_len}",
                signal.len()
            )));
        }
        Ok(Self {
            short_part: signal.samples[..short_len].to_vec(),
            long_part: signal.samples[short_len..short_len + long_len].to_vec(),
            sample_rate: signal.sample_rate,
        })
    }

    /// δt_s in seconds.
    pub fn short_lag(&self) -> f64 {
        (self.short_part.len() / 2) as f64 / self.sample_rate
    }

    /// δt_l in seconds.
    pub fn long_lag(&self) -> f64 {
        (self.long_part.len() / 2) as f64 / self.sample_rate
    }
}

/// −∠(Σ y[n]·y*[n+D]) / (2π·D/fs) over the two halves of `part`.
fn lag_estimate(part: &[Complex64], sample_rate: f64) -> Result<f64> {
    let d = part.len() / 2;
    if d == 0 {
        return Err(Error::Empty("preamble part"));
    }
    let acc: Complex64 = (0..d).map(|n| part[n] * part[n + d].conj()).sum();
    if acc.norm() == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let lag = d as f64 / sample_rate;
    let est = -acc.arg() / (2.0 * PI * lag);
    let limit = 1.0 / (2.0 * lag);
    if est.abs() >= limit {
        return Err(Error::Ambiguous { estimate_hz: est, limit_hz: limit });
    }
    Ok(est)
}

/// Coarse offset δf_s from the short preamble.  Unambiguous for |δf| < 1/(2δt_s).
pub fn estimate_cfo_coarse(split: &PreambleSplit) -> Result<f64> {
    lag_estimate(&split.short_part, split.sample_rate)
}

/// Removes `coarse_hz` from the long preamble, estimates the residual over
/// the longer lag δt_l and returns the total offset `coarse + residual`.
pub fn estimate_cfo_fine(split: &PreambleSplit, coarse_hz: f64) -> Result<f64> {
    let fs = split.sample_rate;
    let corrected: Vec<Complex64> = split
        .long_part
        .iter()
        .enumerate()
        .map(|(n, &y)| y * Complex64::from_polar(1.0, -2.0 * PI * coarse_hz * n as f64 / fs))
        .collect();
    Ok(coarse_hz + lag_estimate(&corrected, fs)?)
}

/// Offsets derived from one join exchange.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CfoEstimate {
    pub coarse_hz: f64,
    pub fine_hz: f64,
    pub ppm_bs: f64,
    pub per_subcarrier_hz: BTreeMap<SubcarrierId, f64>,
    pub doppler_hz: f64,
}

impl CfoEstimate {
    pub fn for_subcarrier(&self, id: SubcarrierId) -> f64 {
        self.per_subcarrier_hz.get(&id).copied().unwrap_or(0.0)
    }
}

/// Converts the offset measured at `join_hz` into ppm and extrapolates it to
/// every subcarrier: δf_i = f_i · fine / f_join.
pub fn ppm_and_subcarrier_cfo(fine_hz: f64, join_hz: f64, plan: &SpectrumPlan) -> Result<CfoEstimate> {
    if !(join_hz > 0.0) {
        return Err(Error::invalid("join frequency must be positive"));
    }
    let ratio = fine_hz / join_hz;
    Ok(CfoEstimate {
        coarse_hz: fine_hz,
        fine_hz,
        ppm_bs: 1e6 * ratio,
        per_subcarrier_hz: plan.ids().map(|id| (id, plan.center_hz(id) * ratio)).collect(),
        doppler_hz: 0.0,
    })
}

/// Node-side pre-rotation by −(δf_i + δf_d).
pub fn proactive_correction(node_tx: &BasebandSignal, delta_f_i: f64, delta_f_d: f64) -> BasebandSignal {
    apply_cfo(node_tx, -(delta_f_i + delta_f_d))
}
