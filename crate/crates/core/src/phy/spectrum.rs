use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Subcarrier identifier.  Ids run from 1 to `num_subcarriers`.
pub type SubcarrierId = u16;

/// Layout of the wideband channel into overlapping orthogonal subcarriers.
///
/// Subcarrier `k` is centred at `band_start + k·Δf` where
/// `Δf = subcarrier_bandwidth · (1 − overlap_fraction)`.  The BS samples the
/// band at `sample_rate` around `wideband_center_hz()` and runs one FFT of
/// `fft_size()` points, so every subcarrier lands on an integer bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumPlan {
    pub band_start: f64,
    pub band_end: f64,
    pub num_subcarriers: u16,
    pub subcarrier_bandwidth: f64,
    pub overlap_fraction: f64,
    pub join_index: SubcarrierId,
    pub downlink_index: SubcarrierId,
    pub backup_indices: Vec<SubcarrierId>,
    pub guard_indices: Vec<SubcarrierId>,
    pub sample_rate: f64,
}

impl Default for SpectrumPlan {
    fn default() -> Self {
        Self {
            band_start: 500e6,
            band_end: 506e6,
            num_subcarriers: 29,
            subcarrier_bandwidth: 400e3,
            overlap_fraction: 0.5,
            join_index: 28,
            downlink_index: 26,
            backup_indices: Vec::new(),
            guard_indices: vec![27, 29],
            sample_rate: 8e6,
        }
    }
}

impl SpectrumPlan {
    /// A plan whose `n` subcarriers fill every FFT bin, with no reserved roles
    /// other than the two highest ids acting as join and downlink.
    pub fn dense(n: u16, spacing_hz: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid("dense plan needs at least 3 subcarriers"));
        }
        let plan = Self {
            band_start: 0.0,
            band_end: (n as f64 + 1.0) * spacing_hz,
            num_subcarriers: n,
            subcarrier_bandwidth: 2.0 * spacing_hz,
            overlap_fraction: 0.5,
            join_index: n,
            downlink_index: n - 1,
            backup_indices: Vec::new(),
            guard_indices: Vec::new(),
            sample_rate: n as f64 * spacing_hz,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn spacing(&self) -> f64 {
        self.subcarrier_bandwidth * (1.0 - self.overlap_fraction)
    }

    pub fn fft_size(&self) -> usize {
        (self.sample_rate / self.spacing()).round() as usize
    }

    /// Index of the subcarrier grid point sitting at the wideband centre.
    pub fn center_index(&self) -> i64 {
        ((self.band_end - self.band_start) / (2.0 * self.spacing())).round() as i64
    }

    pub fn wideband_center_hz(&self) -> f64 {
        self.band_start + self.center_index() as f64 * self.spacing()
    }

    pub fn ids(&self) -> impl Iterator<Item = SubcarrierId> {
        1..=self.num_subcarriers
    }

    pub fn contains(&self, id: SubcarrierId) -> bool {
        id >= 1 && id <= self.num_subcarriers
    }

    /// Absolute RF centre frequency of subcarrier `id`.
    pub fn center_hz(&self, id: SubcarrierId) -> f64 {
        self.band_start + id as f64 * self.spacing()
    }

    /// Signed FFT bin of subcarrier `id` relative to the wideband centre.
    pub fn bin_offset(&self, id: SubcarrierId) -> i64 {
        id as i64 - self.center_index()
    }

    /// Baseband frequency of subcarrier `id` relative to the wideband centre.
    pub fn baseband_hz(&self, id: SubcarrierId) -> f64 {
        self.bin_offset(id) as f64 * self.spacing()
    }

    /// FFT output index holding subcarrier `id`.
    pub fn fft_bin(&self, id: SubcarrierId) -> usize {
        self.bin_offset(id).rem_euclid(self.fft_size() as i64) as usize
    }

    pub fn is_reserved(&self, id: SubcarrierId) -> bool {
        id == self.join_index
            || id == self.downlink_index
            || self.backup_indices.contains(&id)
            || self.guard_indices.contains(&id)
    }

    /// Subcarriers available for node uplinks, in ascending order.
    pub fn data_subcarriers(&self) -> Vec<SubcarrierId> {
        self.ids().filter(|&id| !self.is_reserved(id)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.band_end > self.band_start) {
            return bad("band_end must exceed band_start".into());
        }
        if self.num_subcarriers == 0 {
            return bad("num_subcarriers must be positive".into());
        }
        if !(self.subcarrier_bandwidth > 0.0) {
            return bad("subcarrier_bandwidth must be positive".into());
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return bad(format!("overlap_fraction {} not in [0,1)", self.overlap_fraction));
        }
        if !(self.sample_rate > 0.0) {
            return bad("sample_rate must be positive".into());
        }
        let n = self.fft_size();
        if n == 0 || ((self.sample_rate / self.spacing()) - n as f64).abs() > 1e-9 {
            return bad("sample_rate must be an integer multiple of the subcarrier spacing".into());
        }
        let lo = self.center_hz(1);
        let hi = self.center_hz(self.num_subcarriers);
        if lo < self.band_start || hi > self.band_end {
            return bad("subcarrier centres fall outside the band".into());
        }
        let offsets: Vec<i64> = self.ids().map(|id| self.bin_offset(id)).collect();
        let span = offsets.last().unwrap() - offsets.first().unwrap() + 1;
        if span > n as i64 {
            return bad(format!("{span} subcarriers do not fit an FFT of {n} bins"));
        }
        if 2 * offsets.iter().map(|o| o.abs()).max().unwrap() > n as i64 {
            return bad("subcarriers exceed the Nyquist range of the wideband sample rate".into());
        }
        for &id in [self.join_index, self.downlink_index].iter().chain(&self.backup_indices).chain(&self.guard_indices)
        {
            if !self.contains(id) {
                return bad(format!("subcarrier {id} outside 1..={}", self.num_subcarriers));
            }
        }
        if self.join_index == self.downlink_index
            || self.backup_indices.contains(&self.join_index)
            || self.guard_indices.contains(&self.join_index)
        {
            return bad("join subcarrier must not double as downlink, backup or guard".into());
        }
        if self.backup_indices.contains(&self.downlink_index) {
            return bad("downlink subcarrier listed as its own backup".into());
        }
        Ok(())
    }

    /// True when both neighbours of the join subcarrier are guards or outside the plan.
    pub fn join_isolated(&self) -> bool {
        let j = self.join_index;
        let ok = |id: u16| !self.contains(id) || self.guard_indices.contains(&id);
        ok(j.wrapping_sub(1)) && ok(j + 1)
    }
}
