//! Per-subcarrier frame acquisition and decoding on channelized streams.

use num_complex::Complex64;

use super::modulation::{decide, symbol_statistics, DemodOptions, ModulationKind, ModulationScheme};
use super::packet::{bits_to_u64, preamble_sync_bits, FrameError, SnowPacket, PREAMBLE, PREAMBLE_BITS};
use super::signal::symbol_boundary;
use super::synth::{synthesize, BlockGrid, Emission};
use crate::estimation::{estimate_csi, CsiEstimate};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RxConfig {
    pub scheme: ModulationScheme,
    pub wideband_rate: f64,
    /// Wideband samples per stream sample.
    pub block_len: usize,
    /// Equalise with the preamble LS estimate; otherwise decide against
    /// `reference_amplitude`.
    pub use_csi: bool,
    pub reference_amplitude: f64,
    /// Minimum normalised preamble correlation.
    pub detection_threshold: f64,
    pub csi_parts: usize,
    /// Sub-block timing hypotheses per stream sample.
    pub timing_steps: usize,
    /// Step size of decision-directed gain tracking for BPSK.
    pub tracking_gain: f64,
}

impl RxConfig {
    pub fn new(scheme: ModulationScheme, wideband_rate: f64, block_len: usize) -> Self {
        Self {
            scheme,
            wideband_rate,
            block_len,
            use_csi: true,
            reference_amplitude: 1.0,
            detection_threshold: 0.6,
            csi_parts: 4,
            timing_steps: 8,
            tracking_gain: 0.05,
        }
    }

    pub fn stream_rate(&self) -> f64 {
        self.wideband_rate / self.block_len as f64
    }

    /// Stream samples per symbol.
    pub fn samples_per_symbol(&self) -> f64 {
        self.stream_rate() / self.scheme.symbol_rate
    }
}

/// Where a frame was found, in stream samples from the stream start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub offset: f64,
    pub metric: f64,
    /// Index of the sub-sample timing hypothesis that matched.
    pub hypothesis: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RxOutcome {
    NotDetected { best_metric: f64 },
    Corrupted { detection: Detection, error: FrameError },
    Decoded { packet: SnowPacket, detection: Detection, csi: Option<CsiEstimate> },
}

impl RxOutcome {
    pub fn packet(&self) -> Option<&SnowPacket> {
        match self {
            RxOutcome::Decoded { packet, .. } => Some(packet),
            _ => None,
        }
    }
}

/// Preamble+sync reference as seen through the channelizer, for a frame
/// starting `sub_offset` wideband samples into stream sample 0.
struct Template {
    values: Vec<Complex64>,
    /// Bit index owning each stream sample (`usize::MAX` where none does).
    owner: Vec<usize>,
    norm: f64,
    preamble_len: usize,
}

impl Template {
    fn new(cfg: &RxConfig, bits: &[bool], sub_offset: usize) -> Self {
        let bl = cfg.block_len;
        let sps_wb = cfg.wideband_rate / cfg.scheme.symbol_rate;
        let total = sub_offset + symbol_boundary(bits.len(), sps_wb);
        let n_blocks = total.div_ceil(bl);
        let grid = BlockGrid { sample_rate: cfg.wideband_rate, block_len: bl, n_blocks, extract_hz: 0.0 };
        let em = Emission {
            bits,
            kind: cfg.scheme.kind,
            symbol_rate: cfg.scheme.symbol_rate,
            start: sub_offset as i64,
            freq_hz: 0.0,
            gain: Complex64::new(1.0, 0.0),
        };
        let values = synthesize(&[em], &grid);
        let owner = (0..n_blocks)
            .map(|j| {
                let centre = (j as f64 + 0.5) * bl as f64 - sub_offset as f64;
                if centre < 0.0 {
                    usize::MAX
                } else {
                    ((centre / sps_wb).floor() as usize).min(bits.len() - 1)
                }
            })
            .collect::<Vec<_>>();
        let norm = values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let preamble_end = sub_offset + symbol_boundary(PREAMBLE_BITS, sps_wb);
        Self { values, owner, norm, preamble_len: preamble_end / bl }
    }

    /// Σ_bits |Σ z·t*| / (‖z‖·‖t‖) with `z` the stream starting at `d`.
    fn metric(&self, z: &[Complex64], d: usize, n_bits: usize) -> f64 {
        let w = &z[d..d + self.values.len()];
        let mut per_bit = vec![Complex64::new(0.0, 0.0); n_bits];
        let mut energy = 0.0;
        for ((zv, tv), &o) in w.iter().zip(&self.values).zip(&self.owner) {
            energy += zv.norm_sqr();
            if o != usize::MAX {
                per_bit[o] += zv * tv.conj();
            }
        }
        if energy <= 0.0 || self.norm <= 0.0 {
            return 0.0;
        }
        per_bit.iter().map(|c| c.norm()).sum::<f64>() / (energy.sqrt() * self.norm)
    }
}

/// A receiver for one configuration, holding the precomputed templates.
pub struct Receiver {
    cfg: RxConfig,
    bits: Vec<bool>,
    templates: Vec<Template>,
}

impl Receiver {
    pub fn new(cfg: RxConfig) -> Self {
        let bits = preamble_sync_bits();
        let steps = cfg.timing_steps.max(1);
        let templates = (0..steps).map(|u| Template::new(&cfg, &bits, u * cfg.block_len / steps)).collect();
        Self { cfg, bits, templates }
    }

    pub fn config(&self) -> &RxConfig {
        &self.cfg
    }

    /// Correlates the stream against the preamble+sync template for start
    /// positions in `search` (stream samples, inclusive range), then refines
    /// the best position to a fraction of a stream sample.
    pub fn detect(&self, stream: &[Complex64], search: (i64, i64)) -> Detection {
        let none = Detection { offset: 0.0, metric: 0.0, hypothesis: 0 };
        let tlen = self.templates.iter().map(|t| t.values.len()).max().unwrap();
        if stream.len() < tlen {
            return none;
        }
        let lo = search.0.max(0) as usize;
        let hi = (search.1.max(0) as usize).min(stream.len() - tlen);
        if lo > hi {
            return none;
        }
        let nb = self.bits.len();
        let mut best = (lo, 0usize, f64::MIN);
        for d in lo..=hi {
            let m = self.templates[0].metric(stream, d, nb);
            if m > best.2 {
                best = (d, 0, m);
            }
        }
        let d0 = best.0;
        for d in d0.saturating_sub(1).max(lo)..=(d0 + 1).min(hi) {
            for (u, t) in self.templates.iter().enumerate().skip(1) {
                let m = t.metric(stream, d, nb);
                if m > best.2 {
                    best = (d, u, m);
                }
            }
        }
        let sub = (best.1 * self.cfg.block_len / self.templates.len()) as f64 / self.cfg.block_len as f64;
        Detection { offset: best.0 as f64 + sub, metric: best.2.max(0.0), hypothesis: best.1 }
    }

    /// Detects, estimates the channel on the preamble and decodes a frame.
    pub fn receive(&self, stream: &[Complex64], search: (i64, i64)) -> RxOutcome {
        self.receive_with(stream, search, self.cfg.reference_amplitude)
    }

    /// [`Receiver::receive`] with a per-call amplitude reference for
    /// decisions without CSI.
    pub fn receive_with(&self, stream: &[Complex64], search: (i64, i64), reference_amplitude: f64) -> RxOutcome {
        let cfg = &self.cfg;
        let det = self.detect(stream, search);
        if det.metric < cfg.detection_threshold {
            return RxOutcome::NotDetected { best_metric: det.metric };
        }
        let d = det.offset.floor() as usize;
        let tpl = &self.templates[det.hypothesis];

        let csi = if cfg.use_csi {
            let n = tpl.preamble_len.min(stream.len().saturating_sub(d));
            let n = n - n % cfg.csi_parts.max(1);
            estimate_csi(&stream[d..d + n], &tpl.values[..n], cfg.csi_parts).ok()
        } else {
            None
        };
        let sps = cfg.samples_per_symbol();
        let header_syms = self.bits.len();
        let read = |first: usize, count: usize| -> Option<Vec<Complex64>> {
            let opts = DemodOptions {
                start_offset: det.offset + first as f64 * sps,
                n_symbols: Some(count),
                ..DemodOptions::default()
            };
            symbol_statistics(stream, sps, &opts).ok()
        };
        let Some(len_stats) = read(header_syms, 8) else {
            return RxOutcome::Corrupted { detection: det, error: FrameError::Truncated };
        };
        let mut decider = Decider::new(cfg, csi.as_ref(), reference_amplitude);
        let len_bits = decider.decide(&len_stats);
        let len = bits_to_u64(&len_bits) as usize;
        let Some(body_stats) = read(header_syms + 8, 8 * len + 16) else {
            return RxOutcome::Corrupted { detection: det, error: FrameError::Truncated };
        };
        let mut rest = len_bits;
        rest.extend(decider.decide(&body_stats));
        match SnowPacket::from_header_bits(PREAMBLE, &rest) {
            Ok(packet) => RxOutcome::Decoded { packet, detection: det, csi },
            Err(error) => RxOutcome::Corrupted { detection: det, error },
        }
    }
}

/// One-shot form of [`Receiver::detect`].
pub fn detect(stream: &[Complex64], cfg: &RxConfig, search: (i64, i64)) -> Detection {
    Receiver::new(*cfg).detect(stream, search)
}

/// One-shot form of [`Receiver::receive`].
pub fn receive(stream: &[Complex64], cfg: &RxConfig, search: (i64, i64)) -> RxOutcome {
    Receiver::new(*cfg).receive(stream, search)
}

/// Symbol decisions with the receiver's equalisation policy.
struct Decider {
    kind: ModulationKind,
    h: Option<Complex64>,
    amplitude: f64,
    mu: f64,
}

impl Decider {
    /// The estimate is relative to a unit-gain template, whose full-symbol
    /// level in the stream is √block_len.
    fn new(cfg: &RxConfig, csi: Option<&CsiEstimate>, reference_amplitude: f64) -> Self {
        let level = (cfg.block_len as f64).sqrt();
        Self {
            kind: cfg.scheme.kind,
            h: csi.map(|c| c.h_gain * level),
            amplitude: csi.map(|c| c.amplitude() * level).unwrap_or(reference_amplitude),
            mu: cfg.tracking_gain,
        }
    }

    fn decide(&mut self, stats: &[Complex64]) -> Vec<bool> {
        match (self.kind, self.h) {
            (ModulationKind::Bpsk, Some(mut h)) => {
                let mut out = Vec::with_capacity(stats.len());
                for &s in stats {
                    let bit = (s * h.conj()).re > 0.0;
                    let d = if bit { 1.0 } else { -1.0 };
                    h = h * (1.0 - self.mu) + s * d * self.mu;
                    out.push(bit);
                }
                self.h = Some(h);
                out
            }
            _ => {
                let opts = DemodOptions {
                    csi: self.h.map(|_| Complex64::new(self.amplitude, 0.0)),
                    reference_amplitude: self.amplitude,
                    ..DemodOptions::default()
                };
                decide(stats, self.kind, &opts).bits
            }
        }
    }
}
