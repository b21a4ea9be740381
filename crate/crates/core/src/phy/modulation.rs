use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::signal::{symbol_boundary, BasebandSignal};
use crate::error::{Error, Result};
use crate::estimation::CsiEstimate;

/// Binary modulations a SNOW node can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModulationKind {
    Ook,
    Bpsk,
    Ask,
}

/// Amplitude of a binary-ASK zero relative to a one.
pub const ASK_LOW_LEVEL: f64 = 0.25;

impl ModulationKind {
    /// Real amplitude carried by `bit`.
    pub fn level(self, bit: bool) -> f64 {
        match (self, bit) {
            (ModulationKind::Ook, true) | (ModulationKind::Ask, true) => 1.0,
            (ModulationKind::Ook, false) => 0.0,
            (ModulationKind::Ask, false) => ASK_LOW_LEVEL,
            (ModulationKind::Bpsk, true) => 1.0,
            (ModulationKind::Bpsk, false) => -1.0,
        }
    }

    /// Decision threshold on the normalised amplitude.
    pub fn threshold(self) -> f64 {
        match self {
            ModulationKind::Ook => 0.5,
            ModulationKind::Ask => 0.5 * (1.0 + ASK_LOW_LEVEL),
            ModulationKind::Bpsk => 0.0,
        }
    }
}

impl fmt::Display for ModulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModulationKind::Ook => "ook",
            ModulationKind::Bpsk => "bpsk",
            ModulationKind::Ask => "ask",
        })
    }
}

impl FromStr for ModulationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ook" => Ok(ModulationKind::Ook),
            "bpsk" => Ok(ModulationKind::Bpsk),
            "ask" => Ok(ModulationKind::Ask),
            other => Err(Error::UnsupportedModulation(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationScheme {
    pub kind: ModulationKind,
    pub symbol_rate: f64,
}

impl ModulationScheme {
    pub fn new(kind: ModulationKind, symbol_rate: f64) -> Result<Self> {
        if !(symbol_rate > 0.0) || !symbol_rate.is_finite() {
            return Err(Error::invalid(format!("symbol rate must be positive, got {symbol_rate}")));
        }
        Ok(Self { kind, symbol_rate })
    }

    /// 11.2 kbaud OOK node uplink.
    pub fn uplink_default() -> Self {
        Self { kind: ModulationKind::Ook, symbol_rate: 11_200.0 }
    }

    /// 4.8 kbaud OOK BS downlink.
    pub fn downlink_default() -> Self {
        Self { kind: ModulationKind::Ook, symbol_rate: 4_800.0 }
    }

    pub fn symbol_period(&self) -> f64 {
        1.0 / self.symbol_rate
    }

    pub fn airtime(&self, n_bits: usize) -> f64 {
        n_bits as f64 / self.symbol_rate
    }
}

/// Rectangular-pulse modulation of `bits` onto a tone at `subcarrier_center`
/// (Hz, relative to the wideband centre).  Sample `m` carries symbol
/// `floor(m·symbol_rate/sample_rate)`.
pub fn modulate(
    bits: &[bool],
    scheme: ModulationScheme,
    subcarrier_center: f64,
    bandwidth: f64,
    sample_rate: f64,
) -> Result<BasebandSignal> {
    if bits.is_empty() {
        return Err(Error::Empty("bits"));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::invalid("bandwidth must be positive"));
    }
    if sample_rate < 2.0 * bandwidth {
        return Err(Error::Aliasing { sample_rate, bandwidth });
    }
    if subcarrier_center.abs() + bandwidth / 2.0 > sample_rate / 2.0 {
        return Err(Error::Aliasing { sample_rate, bandwidth: 2.0 * subcarrier_center.abs() + bandwidth });
    }
    let sps = sample_rate / scheme.symbol_rate;
    let total = symbol_boundary(bits.len(), sps);
    let mut samples = Vec::with_capacity(total);
    let w = 2.0 * PI * subcarrier_center / sample_rate;
    for (j, &bit) in bits.iter().enumerate() {
        let level = scheme.kind.level(bit);
        let (a, b) = (symbol_boundary(j, sps), symbol_boundary(j + 1, sps));
        for m in a..b {
            samples.push(Complex64::from_polar(level, w * m as f64));
        }
    }
    BasebandSignal::new(samples, sample_rate)
}

/// Receiver-side parameters for [`demodulate_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemodOptions {
    /// Channel estimate used to equalise symbols before the decision.
    pub csi: Option<Complex64>,
    /// Reference magnitude used by amplitude decisions when no estimate is given.
    pub reference_amplitude: f64,
    /// Start of the first symbol, in samples from the first sample (may be fractional).
    pub start_offset: f64,
    /// Number of symbols to decide; `None` takes every whole symbol in the signal.
    pub n_symbols: Option<usize>,
}

impl Default for DemodOptions {
    fn default() -> Self {
        Self { csi: None, reference_amplitude: 1.0, start_offset: 0.0, n_symbols: None }
    }
}

/// Hard bits plus a signed soft metric per bit (positive favours a one).
#[derive(Debug, Clone, PartialEq)]
pub struct Demodulated {
    pub bits: Vec<bool>,
    pub soft: Vec<f64>,
}

/// Integrates each symbol over the samples lying wholly inside it and decides.
pub fn demodulate(signal: &BasebandSignal, scheme: ModulationScheme, csi: Option<&CsiEstimate>) -> Result<Demodulated> {
    let opts = DemodOptions { csi: csi.map(|c| c.h_gain), ..DemodOptions::default() };
    demodulate_with(signal, scheme, &opts)
}

pub fn demodulate_with(signal: &BasebandSignal, scheme: ModulationScheme, opts: &DemodOptions) -> Result<Demodulated> {
    let stats = symbol_statistics(&signal.samples, signal.sample_rate / scheme.symbol_rate, opts)?;
    Ok(decide(&stats, scheme.kind, opts))
}

/// Mean of the samples fully contained in each symbol interval.
pub fn symbol_statistics(
    samples: &[Complex64],
    samples_per_symbol: f64,
    opts: &DemodOptions,
) -> Result<Vec<Complex64>> {
    let avail = (samples.len() as f64 - opts.start_offset) / samples_per_symbol;
    let n = match opts.n_symbols {
        Some(n) => n,
        None => (avail + 1e-6).floor().max(0.0) as usize,
    };
    if n == 0 || avail + 1e-6 < n as f64 {
        return Err(Error::SignalTooShort);
    }
    let eps = 1e-9;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = opts.start_offset + i as f64 * samples_per_symbol;
        let hi = lo + samples_per_symbol;
        let a = (lo - eps).ceil().max(0.0) as usize;
        let b = ((hi + eps).floor() as usize).min(samples.len());
        let s = if b > a {
            samples[a..b].iter().sum::<Complex64>() / (b - a) as f64
        } else {
            let mid = ((lo + hi) / 2.0).floor().clamp(0.0, samples.len() as f64 - 1.0) as usize;
            samples[mid]
        };
        out.push(s);
    }
    Ok(out)
}

/// Per-symbol decision.  BPSK is decided on the equalised real part; OOK and
/// ASK on the envelope normalised by |Ĥ| or by the reference amplitude.
pub fn decide(stats: &[Complex64], kind: ModulationKind, opts: &DemodOptions) -> Demodulated {
    let thr = kind.threshold();
    let mut bits = Vec::with_capacity(stats.len());
    let mut soft = Vec::with_capacity(stats.len());
    for &s in stats {
        let x = match kind {
            ModulationKind::Bpsk => match opts.csi {
                Some(h) if h.norm_sqr() > 0.0 => (s * h.conj()).re / h.norm_sqr(),
                _ => s.re / opts.reference_amplitude,
            },
            _ => match opts.csi {
                Some(h) if h.norm_sqr() > 0.0 => s.norm() / h.norm(),
                _ => s.norm() / opts.reference_amplitude,
            },
        };
        bits.push(x > thr);
        soft.push(x - thr);
    }
    Demodulated { bits, soft }
}
