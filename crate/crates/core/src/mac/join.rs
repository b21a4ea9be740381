use num_complex::Complex64;
use rand::Rng;

use super::bs::BsState;
use crate::channel::awgn;
use crate::error::{Error, Result};
use crate::estimation::{estimate_cfo_coarse, estimate_cfo_fine, ppm_and_subcarrier_cfo, CfoEstimate, PreambleSplit};
use crate::phy::packet::word_bits;
use crate::phy::synth::{synthesize, BlockGrid, Emission};
use crate::phy::{BasebandSignal, ModulationKind, SpectrumPlan, SubcarrierId, PREAMBLE};

/// Wideband samples per join-stream sample (800 ksps at the default 8 Msps).
pub const JOIN_BLOCK_LEN: usize = 10;
/// Preamble bits forming the short part (two identical 4-bit halves).
pub const JOIN_SHORT_BITS: usize = 8;
/// Preamble bits forming the long part (two identical 12-bit halves).
pub const JOIN_LONG_BITS: usize = 24;

/// What the BS observes of a node's join exchange.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JoinRequest {
    pub node: usize,
    /// Offset of the node's carrier at the join frequency, as seen by the BS.
    pub true_offset_hz: f64,
    /// Complex amplitude of the node's signal at the BS.
    pub gain: Complex64,
    /// Complex-baseband noise density (variance per sample = psd·fs).
    pub noise_psd: f64,
    pub symbol_rate: f64,
    /// Result of the node's CCA on the join subcarrier.
    pub join_idle: bool,
    /// Run the CFO estimators; otherwise the feedback is zero.
    pub estimate_cfo: bool,
    /// The BS drops a join whose preamble SNR (per stream sample of a one
    /// bit) falls below this.
    pub min_snr_db: f64,
}

impl JoinRequest {
    pub fn new(node: usize, true_offset_hz: f64, gain: Complex64, noise_psd: f64) -> Self {
        Self {
            node,
            true_offset_hz,
            gain,
            noise_psd,
            symbol_rate: 100e3,
            join_idle: true,
            estimate_cfo: true,
            min_snr_db: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinResult {
    pub subcarrier: SubcarrierId,
    /// δf_i for the assigned subcarrier.
    pub delta_f_i: f64,
    pub estimate: Option<CfoEstimate>,
}

/// Admits a node: assigns a data subcarrier, estimates its carrier offset on
/// the join preamble and returns the offset extrapolated to that subcarrier.
///
/// A busy join subcarrier, a preamble below `min_snr_db` or an ambiguous
/// estimate yield [`Error::JoinTimeout`] and leave `bs` untouched; the node
/// retries later.
pub fn join<R: Rng + ?Sized>(
    bs: &mut BsState,
    plan: &SpectrumPlan,
    req: &JoinRequest,
    rng: &mut R,
) -> Result<JoinResult> {
    if !req.join_idle {
        return Err(Error::JoinTimeout(req.node));
    }
    if !req.estimate_cfo {
        let subcarrier = bs.assign(req.node, plan)?;
        return Ok(JoinResult { subcarrier, delta_f_i: 0.0, estimate: None });
    }
    let stream = join_preamble_stream(plan, req, rng)?;
    let var = req.noise_psd * plan.sample_rate;
    if var > 0.0 {
        let on_power = 2.0 * (stream.avg_power() - var);
        if on_power < var * 10f64.powf(req.min_snr_db / 10.0) {
            return Err(Error::JoinTimeout(req.node));
        }
    }
    let spb = (stream.sample_rate / req.symbol_rate).round() as usize;
    let split = PreambleSplit::from_signal(&stream, JOIN_SHORT_BITS * spb, JOIN_LONG_BITS * spb)?;
    let fine = match estimate_cfo_coarse(&split).and_then(|c| Ok((c, estimate_cfo_fine(&split, c)?))) {
        Ok(v) => v,
        Err(Error::Ambiguous { .. }) | Err(Error::ZeroEnergy) => return Err(Error::JoinTimeout(req.node)),
        Err(e) => return Err(e),
    };
    let (coarse, fine) = fine;
    let subcarrier = bs.assign(req.node, plan)?;
    let mut est = ppm_and_subcarrier_cfo(fine, plan.center_hz(plan.join_index), plan)?;
    est.coarse_hz = coarse;
    Ok(JoinResult { subcarrier, delta_f_i: est.for_subcarrier(subcarrier), estimate: Some(est) })
}

/// The join preamble as extracted by the BS on the join subcarrier, at
/// `sample_rate / JOIN_BLOCK_LEN`.
pub fn join_preamble_stream<R: Rng + ?Sized>(
    plan: &SpectrumPlan,
    req: &JoinRequest,
    rng: &mut R,
) -> Result<BasebandSignal> {
    let fs = plan.sample_rate;
    let sps = fs / JOIN_BLOCK_LEN as f64 / req.symbol_rate;
    if (sps - sps.round()).abs() > 1e-9 || sps < 2.0 {
        return Err(Error::invalid(format!("join symbol rate {} needs an integer oversampling", req.symbol_rate)));
    }
    let bits = word_bits(PREAMBLE as u64, 32);
    let centre = plan.baseband_hz(plan.join_index);
    let grid = BlockGrid {
        sample_rate: fs,
        block_len: JOIN_BLOCK_LEN,
        n_blocks: bits.len() * sps as usize,
        extract_hz: centre,
    };
    let em = Emission {
        bits: &bits,
        kind: ModulationKind::Ook,
        symbol_rate: req.symbol_rate,
        start: 0,
        freq_hz: centre + req.true_offset_hz,
        gain: req.gain,
    };
    let mut samples = synthesize(&[em], &grid);
    let var = req.noise_psd * fs;
    if var > 0.0 {
        for s in &mut samples {
            *s += awgn(rng, var);
        }
    }
    BasebandSignal::new(samples, grid.block_rate())
}
