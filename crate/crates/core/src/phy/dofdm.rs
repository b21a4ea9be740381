use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::signal::BasebandSignal;
use super::spectrum::{SpectrumPlan, SubcarrierId};
use crate::error::{Error, Result};

/// BS transmit path: one IFFT per block of `plan.fft_size()` samples.
///
/// Each input stream runs at the block rate `sample_rate / fft_size` and holds
/// the symbol X_k for that block.  The output is
/// `x[n] = (1/√N) Σ_k X_k e^{j2π·bin_k·n/N}` within every block.
pub fn dofdm_encode(symbols: &BTreeMap<SubcarrierId, BasebandSignal>, plan: &SpectrumPlan) -> Result<BasebandSignal> {
    if symbols.is_empty() {
        return Err(Error::Empty("symbol map"));
    }
    let n = plan.fft_size();
    let block_rate = plan.sample_rate / n as f64;
    let mut t0 = None;
    for (&id, s) in symbols {
        if !plan.contains(id) {
            return Err(Error::UnknownSubcarrier(id));
        }
        if (s.sample_rate - block_rate).abs() > 1e-6 * block_rate {
            return Err(Error::SampleRateMismatch(s.sample_rate, block_rate));
        }
        match t0 {
            None => t0 = Some(s.t0),
            Some(t) if (t - s.t0).abs() > 0.5 / block_rate => {
                return Err(Error::invalid("streams are not aligned to a common frame start"));
            }
            _ => {}
        }
    }
    let blocks = symbols.values().map(|s| s.len()).max().unwrap_or(0);
    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let scale = 1.0 / (n as f64).sqrt();
    let mut out = Vec::with_capacity(blocks * n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for b in 0..blocks {
        buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (&id, s) in symbols {
            if let Some(&x) = s.samples.get(b) {
                buf[plan.fft_bin(id)] += x;
            }
        }
        ifft.process(&mut buf);
        out.extend(buf.iter().map(|v| v * scale));
    }
    BasebandSignal::with_t0(out, plan.sample_rate, t0.unwrap_or(0.0))
}

/// BS receive path: the global FFT over consecutive blocks of `plan.fft_size()`
/// samples.  Returns one block-rate stream per subcarrier, scaled so that the
/// transform is unitary.  A trailing partial block is dropped.
pub fn dofdm_decode(signal: &BasebandSignal, plan: &SpectrumPlan) -> Result<BTreeMap<SubcarrierId, BasebandSignal>> {
    signal.require_non_empty("signal")?;
    if (signal.sample_rate - plan.sample_rate).abs() > 1e-6 * plan.sample_rate {
        return Err(Error::SampleRateMismatch(signal.sample_rate, plan.sample_rate));
    }
    let n = plan.fft_size();
    let blocks = signal.len() / n;
    let fft = FftPlanner::new().plan_fft_forward(n);
    let scale = 1.0 / (n as f64).sqrt();
    let ids: Vec<SubcarrierId> = plan.ids().collect();
    let mut streams: Vec<Vec<Complex64>> = vec![Vec::with_capacity(blocks); ids.len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for b in 0..blocks {
        buf.copy_from_slice(&signal.samples[b * n..(b + 1) * n]);
        fft.process(&mut buf);
        for (k, &id) in ids.iter().enumerate() {
            streams[k].push(buf[plan.fft_bin(id)] * scale);
        }
    }
    let rate = plan.sample_rate / n as f64;
    ids.into_iter().zip(streams).map(|(id, s)| Ok((id, BasebandSignal::with_t0(s, rate, signal.t0)?))).collect()
}

/// Down-converts by `offset_hz` and sums blocks of `block_len` samples,
/// scaled by `1/√block_len`.  The mixer phase is referenced to the first
/// sample, so for a bin-centred offset the output equals the matching FFT bin.
pub fn channelize(signal: &BasebandSignal, offset_hz: f64, block_len: usize) -> Result<BasebandSignal> {
    signal.require_non_empty("signal")?;
    if block_len == 0 {
        return Err(Error::invalid("block length must be positive"));
    }
    let blocks = signal.len() / block_len;
    let scale = 1.0 / (block_len as f64).sqrt();
    let w = -2.0 * PI * offset_hz / signal.sample_rate;
    let mut out = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let base = b * block_len;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..block_len {
            let n = base + i;
            acc += signal.samples[n] * Complex64::from_polar(1.0, w * n as f64);
        }
        out.push(acc * scale);
    }
    BasebandSignal::with_t0(out, signal.sample_rate / block_len as f64, signal.t0)
}
