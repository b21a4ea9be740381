use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex baseband samples at a fixed rate, starting at `t0` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct BasebandSignal {
    pub samples: Vec<Complex64>,
    pub sample_rate: f64,
    pub t0: f64,
}

impl BasebandSignal {
    pub fn new(samples: Vec<Complex64>, sample_rate: f64) -> Result<Self> {
        Self::with_t0(samples, sample_rate, 0.0)
    }

    pub fn with_t0(samples: Vec<Complex64>, sample_rate: f64, t0: f64) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::invalid(format!("sample rate must be positive, got {sample_rate}")));
        }
        Ok(Self { samples, sample_rate, t0 })
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Result<Self> {
        Self::new(vec![Complex64::new(0.0, 0.0); len], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }

    /// Mean of |x|².  Zero for an empty signal.
    pub fn avg_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.energy() / self.samples.len() as f64
    }

    pub fn peak_power(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, gain: Complex64) -> Self {
        Self { samples: self.samples.iter().map(|s| s * gain).collect(), sample_rate: self.sample_rate, t0: self.t0 }
    }

    /// Real part of every sample, as the waveform a single real DAC would emit.
    pub fn real_part(&self) -> Self {
        Self {
            samples: self.samples.iter().map(|s| Complex64::new(s.re, 0.0)).collect(),
            sample_rate: self.sample_rate,
            t0: self.t0,
        }
    }

    pub(crate) fn require_non_empty(&self, what: &'static str) -> Result<()> {
        if self.samples.is_empty() {
            Err(Error::Empty(what))
        } else {
            Ok(())
        }
    }
}

/// Index of the first sample at or after `j` symbol periods, for `samples_per_symbol`
/// samples per symbol.  Sample `m` belongs to symbol `floor(m / samples_per_symbol)`.
pub fn symbol_boundary(j: usize, samples_per_symbol: f64) -> usize {
    let x = j as f64 * samples_per_symbol;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}
