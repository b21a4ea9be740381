use serde::{Deserialize, Serialize};

use super::energy::EnergyProfile;
use crate::atpc::PowerVector;
use crate::channel::PathLossModel;
use crate::error::{Error, Result};
use crate::mac::MacConfig;
use crate::phy::{ModulationKind, SpectrumPlan};

/// Placement of the nodes around the BS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyConfig {
    pub node_count: usize,
    /// Node i sits in cluster i mod len at this distance from the BS.
    pub cluster_distances_m: Vec<f64>,
    /// Spacing between neighbouring nodes of one cluster.
    pub cluster_spacing_m: f64,
    /// Explicit (x, y) positions in metres; overrides the clusters when non-empty.
    pub positions_m: Vec<[f64; 2]>,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            node_count: 25,
            cluster_distances_m: vec![200.0, 400.0, 600.0, 800.0, 1000.0],
            cluster_spacing_m: 5.0,
            positions_m: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    pub payload_bytes: usize,
    /// Uniform gap between a node's packets, in ms.
    pub interval_ms: [f64; 2],
    /// Data packets each node generates.
    pub packets_per_node: u64,
    /// Stop generating new packets after this many seconds of data phase; 0 disables.
    pub duration_s: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self { payload_bytes: 30, interval_ms: [0.0, 500.0], packets_per_node: 100, duration_s: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Compensation {
    pub csi: bool,
    pub cfo: bool,
    pub atpc: bool,
}

impl Default for Compensation {
    fn default() -> Self {
        Self { csi: true, cfo: true, atpc: true }
    }
}

impl Compensation {
    pub const NONE: Self = Self { csi: false, cfo: false, atpc: false };
    pub const ALL: Self = Self { csi: true, cfo: true, atpc: true };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    pub modulation: ModulationKind,
    pub uplink_symbol_rate: f64,
    pub downlink_symbol_rate: f64,
    pub join_symbol_rate: f64,
    pub node_bandwidth_hz: f64,
    /// The node receiver locks onto downlink carriers within
    /// ±node_bandwidth_hz/2 of its tuning.
    pub node_afc: bool,
    pub tx_power_dbm: f64,
    pub bs_tx_power_dbm: f64,
    pub rx_sensitivity_dbm: f64,
    /// CCA reports busy above sensitivity + this margin.
    pub cca_margin_db: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            modulation: ModulationKind::Ook,
            uplink_symbol_rate: 11_200.0,
            downlink_symbol_rate: 4_800.0,
            join_symbol_rate: 100e3,
            node_bandwidth_hz: 39e3,
            node_afc: true,
            tx_power_dbm: 15.0,
            bs_tx_power_dbm: 15.0,
            rx_sensitivity_dbm: -114.0,
            cca_margin_db: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub pathloss: PathLossModel,
    /// Receiver noise density in dBm/Hz.
    pub noise_psd_dbm_hz: f64,
    /// Rayleigh block fading, one draw per packet.
    pub fading: bool,
    /// No noise, no fading and no oscillator error.
    pub ideal: bool,
    /// Node oscillator errors are uniform in ±this many ppm.
    pub ppm_bound: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            pathloss: PathLossModel::default(),
            noise_psd_dbm_hz: -152.0,
            fading: true,
            ideal: false,
            ppm_bound: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtpcConfig {
    pub pdr_threshold: f64,
    pub levels: PowerVector,
    /// Probe packets per power level for the initial fit.
    pub probe_packets: usize,
    /// Readings per feedback period (K).
    pub readings_per_period: usize,
    /// Transmissions summarised by one PDR reading.
    pub packets_per_reading: usize,
}

impl Default for AtpcConfig {
    fn default() -> Self {
        Self {
            pdr_threshold: 0.9,
            levels: PowerVector::default(),
            probe_packets: 100,
            readings_per_period: 5,
            packets_per_reading: 10,
        }
    }
}

/// Constant-velocity motion of one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityTrace {
    pub node: usize,
    pub speed_mps: f64,
    /// Direction of travel, radians from the +x axis.
    pub heading_rad: f64,
}

/// Per-node departures from the network-wide settings.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeOverride {
    pub node: usize,
    #[serde(default)]
    pub tx_power_dbm: Option<f64>,
    #[serde(default)]
    pub atpc: Option<bool>,
    #[serde(default)]
    pub interval_ms: Option<[f64; 2]>,
    /// Keep transmitting until every other node has finished.
    #[serde(default)]
    pub background: bool,
}

/// A wideband device bursting on a fraction of the data subcarriers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterfererConfig {
    pub overlap_fraction: f64,
    pub position_m: [f64; 2],
    pub tx_power_dbm: f64,
    pub burst_bytes: usize,
    pub period_ms: f64,
}

impl Default for InterfererConfig {
    fn default() -> Self {
        Self { overlap_fraction: 1.0, position_m: [200.0, 0.0], tx_power_dbm: 15.0, burst_bytes: 40, period_ms: 200.0 }
    }
}

/// Sweep values and sizes used by the named scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioParams {
    pub papr_frames: usize,
    pub papr_subcarriers: u16,
    pub distances_m: Vec<f64>,
    pub cluster_size: usize,
    pub node_counts: Vec<usize>,
    pub speeds_mph: Vec<f64>,
    pub payloads_bytes: Vec<usize>,
    pub mobile_node: usize,
    pub overlaps: Vec<f64>,
    pub near_distance_m: f64,
    pub middle_distance_m: f64,
    pub near_power_dbm: f64,
    pub near_interval_ms: [f64; 2],
    pub middle_start_power_dbm: f64,
    /// Fixed powers tried by the near-far sweep.
    pub sweep_powers_dbm: Vec<f64>,
    /// Frames per point of the downlink sweep and per failover phase.
    pub downlink_frames: usize,
    /// Downlink jammer power over the BS signal at the node, dB.
    pub jammer_to_signal_db: f64,
    pub estimator_trials: usize,
    pub snrs_db: Vec<f64>,
    /// Injected oscillator errors for the CFO bench (both signs are used).
    pub cfo_ppms: Vec<f64>,
    /// π·δf·T points of the SNR-loss check.
    pub snr_loss_points: Vec<f64>,
    pub snr_loss_es_n0_db: f64,
    pub atpc_iterations: usize,
    /// (slope per dB, intercept) of the synthetic ATPC link.
    pub atpc_link: [f64; 2],
    /// Drop of the link intercept right after the initial fit.
    pub atpc_link_shift: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            papr_frames: 100_000,
            papr_subcarriers: 64,
            distances_m: vec![200.0, 400.0, 600.0, 800.0, 1000.0],
            cluster_size: 5,
            node_counts: vec![1, 5, 10, 15, 20, 25],
            speeds_mph: vec![5.0, 10.0, 20.0],
            payloads_bytes: vec![10, 30, 60, 90, 120],
            mobile_node: 12,
            overlaps: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            near_distance_m: 20.0,
            middle_distance_m: 200.0,
            near_power_dbm: 0.0,
            near_interval_ms: [0.0, 100.0],
            middle_start_power_dbm: 0.0,
            sweep_powers_dbm: vec![0.0, 3.0, 6.0, 9.0, 12.0, 15.0],
            downlink_frames: 200,
            jammer_to_signal_db: 6.0,
            estimator_trials: 1000,
            snrs_db: vec![5.0, 10.0, 20.0, 40.0],
            cfo_ppms: vec![10.0, 15.0, 20.0],
            snr_loss_points: vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.29],
            snr_loss_es_n0_db: 10.0,
            atpc_iterations: 8,
            atpc_link: [0.05, 0.35],
            atpc_link_shift: 0.1,
        }
    }
}

/// Everything one network run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub seed: u64,
    pub spectrum: SpectrumPlan,
    pub topology: TopologyConfig,
    pub traffic: TrafficConfig,
    pub compensation: Compensation,
    pub radio: RadioConfig,
    pub channel: ChannelConfig,
    pub mac: MacConfig,
    pub atpc: AtpcConfig,
    pub energy: EnergyProfile,
    pub mobility: Vec<MobilityTrace>,
    pub nodes: Vec<NodeOverride>,
    pub interferer: Option<InterfererConfig>,
    pub scenario: ScenarioParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            spectrum: SpectrumPlan::default(),
            topology: TopologyConfig::default(),
            traffic: TrafficConfig::default(),
            compensation: Compensation::default(),
            radio: RadioConfig::default(),
            channel: ChannelConfig::default(),
            mac: MacConfig::default(),
            atpc: AtpcConfig::default(),
            energy: EnergyProfile::default(),
            mobility: Vec::new(),
            nodes: Vec::new(),
            interferer: None,
            scenario: ScenarioParams::default(),
        }
    }
}

impl SimConfig {
    /// Parses TOML on top of `base`, then applies dotted `key=value` overrides.
    pub fn from_toml_with(base: &SimConfig, text: &str, overrides: &[String]) -> Result<Self> {
        let mut value = toml::Value::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
        if !text.trim().is_empty() {
            let file: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
            merge(&mut value, toml::Value::Table(file));
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: SimConfig = value.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(&Self::default(), text, &[])
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.spectrum.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.topology.node_count == 0 {
            return bad("node_count must be positive".into());
        }
        if self.topology.positions_m.is_empty() {
            if self.topology.cluster_distances_m.is_empty() {
                return bad("no cluster distances".into());
            }
            if let Some(d) = self.topology.cluster_distances_m.iter().find(|d| !(**d > 0.0)) {
                return bad(format!("non-positive cluster distance {d}"));
            }
        } else {
            if self.topology.positions_m.len() != self.topology.node_count {
                return bad(format!(
                    "{} positions for {} nodes",
                    self.topology.positions_m.len(),
                    self.topology.node_count
                ));
            }
            if self.topology.positions_m.iter().any(|p| p[0].hypot(p[1]) <= 0.0) {
                return bad("node placed at the BS".into());
            }
        }
        let t = &self.traffic;
        if t.payload_bytes == 0 || t.payload_bytes > 255 {
            return bad(format!("payload_bytes {} outside 1..=255", t.payload_bytes));
        }
        if !(t.interval_ms[0] >= 0.0 && t.interval_ms[1] >= t.interval_ms[0]) {
            return bad("interval_ms must satisfy 0 <= min <= max".into());
        }
        if t.packets_per_node == 0 && t.duration_s <= 0.0 {
            return bad("need a packet budget or a duration".into());
        }
        let fs = self.spectrum.sample_rate;
        for (name, r) in [
            ("uplink", self.radio.uplink_symbol_rate),
            ("downlink", self.radio.downlink_symbol_rate),
            ("join", self.radio.join_symbol_rate),
        ] {
            if !(r > 0.0 && r < fs) {
                return bad(format!("{name} symbol rate {r} out of range"));
            }
        }
        if !(self.channel.ppm_bound >= 0.0) {
            return bad("ppm_bound must be non-negative".into());
        }
        let a = &self.atpc;
        if !(a.pdr_threshold > 0.0 && a.pdr_threshold <= 1.0) {
            return bad("pdr_threshold outside (0,1]".into());
        }
        if a.probe_packets == 0 || a.readings_per_period == 0 || a.packets_per_reading == 0 {
            return bad("atpc counts must be positive".into());
        }
        for m in &self.mobility {
            if m.node >= self.topology.node_count {
                return bad(format!("mobility for unknown node {}", m.node));
            }
        }
        for o in &self.nodes {
            if o.node >= self.topology.node_count {
                return bad(format!("override for unknown node {}", o.node));
            }
        }
        if let Some(i) = &self.interferer {
            if !(0.0..=1.0).contains(&i.overlap_fraction) {
                return bad("overlap_fraction outside [0,1]".into());
            }
            if i.burst_bytes == 0 || i.burst_bytes > 255 || !(i.period_ms > 0.0) {
                return bad("invalid interferer burst".into());
            }
        }
        self.energy.validate()?;
        Ok(())
    }

    /// Position of node `i` in metres.
    pub fn position(&self, i: usize) -> [f64; 2] {
        let t = &self.topology;
        if !t.positions_m.is_empty() {
            return t.positions_m[i];
        }
        let k = t.cluster_distances_m.len();
        let (c, j) = (i % k, i / k);
        let r = t.cluster_distances_m[c];
        let angle = std::f64::consts::TAU * c as f64 / k as f64 + j as f64 * t.cluster_spacing_m / r;
        [r * angle.cos(), r * angle.sin()]
    }

    pub fn node_override(&self, i: usize) -> NodeOverride {
        self.nodes.iter().find(|o| o.node == i).copied().unwrap_or(NodeOverride { node: i, ..Default::default() })
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn apply_override(value: &mut toml::Value, assignment: &str) -> Result<()> {
    let (key, raw) =
        assignment.split_once('=').ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let parsed = parse_scalar(raw.trim());
    let mut cur = value;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Config(format!("empty segment in `{key}`")));
        }
        let table =
            cur.as_table_mut().ok_or_else(|| Error::Config(format!("`{}` is not a table", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        cur = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Ok(())
}

/// A TOML value if `raw` parses as one, otherwise the bare string.
fn parse_scalar(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let d = SimConfig::default();
        let text = d.to_toml().unwrap();
        assert_eq!(SimConfig::from_toml(&text).unwrap(), d);
    }

    #[test]
    fn overrides() {
        let c = SimConfig::from_toml_with(
            &SimConfig::default(),
            "[traffic]\npayload_bytes = 60\n",
            &["topology.node_count=5".into(), "compensation.cfo=false".into(), "radio.modulation=bpsk".into()],
        )
        .unwrap();
        assert_eq!(c.traffic.payload_bytes, 60);
        assert_eq!(c.topology.node_count, 5);
        assert!(!c.compensation.cfo);
        assert_eq!(c.radio.modulation, ModulationKind::Bpsk);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(SimConfig::from_toml("[traffic]\nbogus = 1\n"), Err(Error::Config(_))));
        assert!(SimConfig::from_toml_with(&SimConfig::default(), "", &["nope=1".into()]).is_err());
        assert!(SimConfig::from_toml_with(&SimConfig::default(), "", &["seed".into()]).is_err());
    }

    #[test]
    fn invalid_topology() {
        let e = SimConfig::from_toml("[topology]\ncluster_distances_m = [100.0, -5.0]\n");
        assert!(matches!(e, Err(Error::Config(_))));
    }

    #[test]
    fn clusters() {
        let c = SimConfig::default();
        for i in 0..25 {
            let p = c.position(i);
            let r = p[0].hypot(p[1]);
            assert!((r - c.topology.cluster_distances_m[i % 5]).abs() < 1e-9);
        }
    }
}
