//! Closed-form synthesis of channelizer output.
//!
//! A packet is a train of rectangular symbols on a tone, so the sum over one
//! FFT block of `B` wideband samples is a handful of geometric series.  This
//! module evaluates those sums directly, producing exactly what
//! [`channelize`](super::dofdm::channelize) (and hence the matching
//! [`dofdm_decode`](super::dofdm::dofdm_decode) bin) would return for the
//! mixed wideband signal, without generating the wideband samples.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::modulation::ModulationKind;
use super::signal::symbol_boundary;

/// One transmission as seen by the receiver window.
#[derive(Debug, Clone, Copy)]
pub struct Emission<'a> {
    pub bits: &'a [bool],
    pub kind: ModulationKind,
    pub symbol_rate: f64,
    /// Wideband sample index of the first sample, relative to the window start.
    pub start: i64,
    /// Carrier relative to the wideband centre, offsets included.
    pub freq_hz: f64,
    /// Complex amplitude at the receiver (path loss, fading and power folded in).
    pub gain: Complex64,
}

impl Emission<'_> {
    /// Length in wideband samples at `sample_rate`.
    pub fn len_samples(&self, sample_rate: f64) -> usize {
        symbol_boundary(self.bits.len(), sample_rate / self.symbol_rate)
    }
}

/// Output grid of a channelizer: `n_blocks` sums of `block_len` samples,
/// down-converted by `extract_hz`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockGrid {
    pub sample_rate: f64,
    pub block_len: usize,
    pub n_blocks: usize,
    pub extract_hz: f64,
}

impl BlockGrid {
    pub fn block_rate(&self) -> f64 {
        self.sample_rate / self.block_len as f64
    }
}

/// Blocks between exact recomputations of the per-block phasor.
const RESYNC: usize = 256;

fn cis_cycles(x: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * (x - x.floor()))
}

/// Adds the channelized contribution of every emission onto `out`
/// (length `grid.n_blocks`).
pub fn accumulate(out: &mut [Complex64], emissions: &[Emission<'_>], grid: &BlockGrid) {
    let bl = grid.block_len;
    let fs = grid.sample_rate;
    let scale = 1.0 / (bl as f64).sqrt();
    let win_len = (grid.n_blocks * bl) as i64;
    let mut prefix = vec![Complex64::new(0.0, 0.0); bl + 1];
    for e in emissions {
        let len = e.len_samples(fs) as i64;
        let (s0, s1) = (e.start.max(0), (e.start + len).min(win_len));
        if s0 >= s1 {
            continue;
        }
        let nu = (e.freq_hz - grid.extract_hz) / fs;
        let step = cis_cycles(nu);
        let mut rot = Complex64::new(1.0, 0.0);
        for p in prefix.iter_mut().skip(1).take(bl) {
            *p = rot;
            rot *= step;
        }
        for i in 1..=bl {
            let prev = prefix[i - 1];
            prefix[i] += prev;
        }
        // prefix[i] = Σ_{u<i} e^{j2πνu} after the scan above (prefix[0] = 0).
        let head = e.gain * cis_cycles(-e.freq_hz / fs * e.start as f64) * scale;
        let sps = fs / e.symbol_rate;
        let levels: Vec<f64> = e.bits.iter().map(|&b| e.kind.level(b)).collect();
        let bounds: Vec<i64> = (0..=levels.len()).map(|j| e.start + symbol_boundary(j, sps) as i64).collect();
        let first_block = (s0 as usize) / bl;
        let last_block = ((s1 - 1) as usize) / bl;
        let mut sym = bounds.partition_point(|&x| x <= s0).saturating_sub(1);
        let block_step = cis_cycles(nu * bl as f64);
        let mut block_rot = Complex64::new(1.0, 0.0);
        for (b, slot) in out.iter_mut().enumerate().take(last_block + 1).skip(first_block) {
            let blk0 = (b * bl) as i64;
            if (b - first_block) % RESYNC == 0 {
                block_rot = cis_cycles(nu * blk0 as f64);
            }
            let a = s0.max(blk0);
            let c = s1.min(blk0 + bl as i64);
            let mut acc = Complex64::new(0.0, 0.0);
            let mut pos = a;
            while pos < c {
                while bounds[sym + 1] <= pos {
                    sym += 1;
                }
                let seg_end = c.min(bounds[sym + 1]);
                let lv = levels[sym];
                if lv != 0.0 {
                    let (ia, ic) = ((pos - blk0) as usize, (seg_end - blk0) as usize);
                    acc += (prefix[ic] - prefix[ia]) * lv;
                }
                pos = seg_end;
            }
            if acc != Complex64::new(0.0, 0.0) {
                *slot += head * block_rot * acc;
            }
            block_rot *= block_step;
        }
    }
}

pub fn synthesize(emissions: &[Emission<'_>], grid: &BlockGrid) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); grid.n_blocks];
    accumulate(&mut out, emissions, grid);
    out
}
