use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::phy::{modulate, BasebandSignal, ModulationScheme};

/// Least-squares estimate of the flat-fading gain H in `y = H·p + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiEstimate {
    pub h_gain: Complex64,
    /// Per-segment estimates, one for each of the `n_parts` preamble parts.
    pub part_gains: Vec<Complex64>,
    /// Residual variance per sample (W = σ²·I).
    pub noise_covariance: f64,
    pub n_parts: usize,
}

impl CsiEstimate {
    /// Mean magnitude of the per-part estimates.  Unlike |Ĥ| it does not
    /// shrink when a small residual frequency offset rotates H across the
    /// preamble.
    pub fn amplitude(&self) -> f64 {
        if self.part_gains.is_empty() {
            return self.h_gain.norm();
        }
        self.part_gains.iter().map(|h| h.norm()).sum::<f64>() / self.part_gains.len() as f64
    }
}

/// Splits `received` and `reference` into `n_parts` equal segments
/// P = [p_1 … p_n], Y = [y_1 … y_n] and solves Y = H·P in the least-squares
/// sense: Ĥ = Σ p_iᴴ y_i / Σ ‖p_i‖².
pub fn estimate_csi(received: &[Complex64], reference: &[Complex64], n_parts: usize) -> Result<CsiEstimate> {
    if n_parts == 0 {
        return Err(Error::invalid("n_parts must be positive"));
    }
    if received.len() != reference.len() {
        return Err(Error::invalid(format!(
            "received ({}) and reference ({}) lengths differ",
            received.len(),
            reference.len()
        )));
    }
    if received.is_empty() || received.len() % n_parts != 0 {
        return Err(Error::invalid(format!("preamble length {} not divisible into {n_parts} parts", received.len())));
    }
    let seg = received.len() / n_parts;
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = 0.0;
    let mut part_gains = Vec::with_capacity(n_parts);
    for (y, p) in received.chunks(seg).zip(reference.chunks(seg)) {
        let pn: Complex64 = y.iter().zip(p).map(|(y, p)| p.conj() * y).sum();
        let pd: f64 = p.iter().map(|p| p.norm_sqr()).sum();
        num += pn;
        den += pd;
        part_gains.push(if pd > 0.0 { pn / pd } else { Complex64::new(0.0, 0.0) });
    }
    if den <= 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let h = num / den;
    let resid: f64 = received.iter().zip(reference).map(|(y, p)| (y - h * p).norm_sqr()).sum::<f64>();
    Ok(CsiEstimate { h_gain: h, part_gains, noise_covariance: resid / received.len() as f64, n_parts })
}

/// Builds the reference waveform from the known preamble bits at the
/// received signal's rate, then calls [`estimate_csi`].  Trailing samples that
/// do not divide evenly into `n_parts` are ignored.
pub fn estimate_csi_from_bits(
    received: &BasebandSignal,
    known_preamble: &[bool],
    scheme: ModulationScheme,
    n_parts: usize,
) -> Result<CsiEstimate> {
    received.require_non_empty("received preamble")?;
    let fs = received.sample_rate;
    let reference = modulate(known_preamble, scheme, 0.0, scheme.symbol_rate.min(fs / 2.0), fs)?;
    let n = reference.len().min(received.len());
    let n = n - n % n_parts.max(1);
    estimate_csi(&received.samples[..n], &reference.samples[..n], n_parts)
}
