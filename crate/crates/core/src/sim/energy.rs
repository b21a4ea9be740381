use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::trace::{Trace, TraceEvent};
use crate::error::{Error, Result};

/// Supply and current draw of a node radio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyProfile {
    pub supply_v: f64,
    pub rx_current_a: f64,
    pub idle_current_a: f64,
    /// (dBm, A) points, interpolated linearly and clamped at the ends.
    pub tx_current_table: Vec<[f64; 2]>,
}

impl Default for EnergyProfile {
    fn default() -> Self {
        Self {
            supply_v: 3.3,
            rx_current_a: 5.4e-3,
            idle_current_a: 0.0,
            tx_current_table: vec![[0.0, 5.4e-3], [10.0, 13.4e-3], [15.0, 22.0e-3]],
        }
    }
}

impl EnergyProfile {
    pub fn validate(&self) -> Result<()> {
        if !(1.8..=3.8).contains(&self.supply_v) {
            return Err(Error::Config(format!("supply {} V outside 1.8..=3.8", self.supply_v)));
        }
        if self.rx_current_a < 0.0 || self.idle_current_a < 0.0 {
            return Err(Error::Config("currents must be non-negative".into()));
        }
        if self.tx_current_table.is_empty() {
            return Err(Error::Config("empty tx current table".into()));
        }
        if self.tx_current_table.iter().any(|p| p[1] < 0.0) {
            return Err(Error::Config("currents must be non-negative".into()));
        }
        if self.tx_current_table.windows(2).any(|w| !(w[1][0] > w[0][0])) {
            return Err(Error::Config("tx current table must be sorted by power".into()));
        }
        Ok(())
    }

    /// Transmit current at `dbm`.
    pub fn tx_current(&self, dbm: f64) -> f64 {
        let t = &self.tx_current_table;
        if dbm <= t[0][0] {
            return t[0][1];
        }
        for w in t.windows(2) {
            if dbm <= w[1][0] {
                let f = (dbm - w[0][0]) / (w[1][0] - w[0][0]);
                return w[0][1] + f * (w[1][1] - w[0][1]);
            }
        }
        t[t.len() - 1][1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RadioState {
    Tx { power_dbm: f64 },
    Rx,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyReport {
    pub per_node_j: BTreeMap<usize, f64>,
    pub delivered_bits: BTreeMap<usize, u64>,
    /// Total energy over total delivered payload bits; zero when nothing was delivered.
    pub per_bit_j: f64,
}

impl EnergyReport {
    pub fn node_per_bit_j(&self, node: usize) -> f64 {
        let bits = self.delivered_bits.get(&node).copied().unwrap_or(0);
        if bits == 0 {
            0.0
        } else {
            self.per_node_j.get(&node).copied().unwrap_or(0.0) / bits as f64
        }
    }
}

/// E = Σ V·I(state, power)·duration over every node's radio intervals, with
/// the rest of the trace span charged at the idle current.  Probe traffic is
/// excluded.  Per-bit energy divides by unique delivered payload bits.
pub fn energy_consumed(trace: &Trace, profile: &EnergyProfile) -> Result<EnergyReport> {
    let mut intervals: BTreeMap<usize, Vec<(u64, u64, RadioState)>> = BTreeMap::new();
    let mut delivered: BTreeMap<usize, BTreeMap<u64, usize>> = BTreeMap::new();
    for r in &trace.records {
        match &r.event {
            TraceEvent::Radio { state, start, end, probe: false } => {
                if let Some(n) = r.entity.node() {
                    intervals.entry(n).or_default().push((*start, *end, *state));
                }
            }
            TraceEvent::DecodeOk { node, seq, payload_bits, probe: false } => {
                delivered.entry(*node).or_default().insert(*seq, *payload_bits);
            }
            _ => {}
        }
    }
    let dt = 1.0 / trace.sample_rate;
    let span = trace.span.1.saturating_sub(trace.span.0) as f64 * dt;
    let mut report = EnergyReport::default();
    for n in 0..trace.node_count {
        let mut list = intervals.remove(&n).unwrap_or_default();
        list.sort_by_key(|i| (i.0, i.1));
        if list.windows(2).any(|w| w[1].0 < w[0].1) {
            return Err(Error::OverlappingIntervals(n));
        }
        let mut active = 0.0;
        let mut joules = 0.0;
        for (s, e, st) in list {
            let d = e.saturating_sub(s) as f64 * dt;
            active += d;
            let i = match st {
                RadioState::Tx { power_dbm } => profile.tx_current(power_dbm),
                RadioState::Rx => profile.rx_current_a,
            };
            joules += profile.supply_v * i * d;
        }
        joules += profile.supply_v * profile.idle_current_a * (span - active).max(0.0);
        report.per_node_j.insert(n, joules);
        let bits = delivered.get(&n).map(|m| m.values().map(|&b| b as u64).sum()).unwrap_or(0);
        report.delivered_bits.insert(n, bits);
    }
    let total_bits: u64 = report.delivered_bits.values().sum();
    let total_j: f64 = report.per_node_j.values().sum();
    report.per_bit_j = if total_bits == 0 { 0.0 } else { total_j / total_bits as f64 };
    Ok(report)
}
