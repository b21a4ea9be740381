use crate::error::{Error, Result};
use crate::phy::SubcarrierId;

/// Counters and derived figures for one node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodeMetrics {
    pub node: usize,
    pub subcarrier: SubcarrierId,
    pub distance_m: f64,
    pub tx_power_dbm: f64,
    /// Data transmissions, retransmissions included.
    pub sent: u64,
    pub decoded: u64,
    pub acked: u64,
    /// Packets abandoned after the retry budget.
    pub dropped: u64,
    /// Seconds on air for data transmissions.
    pub airtime_s: f64,
    /// Frame bits of decoded transmissions.
    pub decoded_bits: u64,
    /// Unique payload bits that reached the BS.
    pub delivered_payload_bits: u64,
    pub delays_ms: Vec<f64>,
    pub energy_j: f64,
}

impl NodeMetrics {
    /// decoded / sent.
    pub fn prr(&self) -> f64 {
        ratio(self.decoded, self.sent)
    }

    /// acked / sent.
    pub fn pdr(&self) -> f64 {
        ratio(self.acked, self.sent)
    }

    pub fn lost(&self) -> u64 {
        self.sent - self.decoded
    }

    /// Decoded bits per second of airtime.
    pub fn throughput_bps(&self) -> f64 {
        if self.airtime_s > 0.0 {
            self.decoded_bits as f64 / self.airtime_s
        } else {
            0.0
        }
    }

    pub fn mean_delay_ms(&self) -> f64 {
        mean(&self.delays_ms)
    }

    pub fn energy_per_bit_j(&self) -> f64 {
        if self.delivered_payload_bits == 0 {
            0.0
        } else {
            self.energy_j / self.delivered_payload_bits as f64
        }
    }
}

/// Per-node and network-wide results of a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metrics {
    pub nodes: Vec<NodeMetrics>,
    pub ack_transmissions: u64,
    pub cca_busy: u64,
    /// Simulated seconds from the first data wake-up to the last event.
    pub duration_s: f64,
}

impl Metrics {
    pub fn sent(&self) -> u64 {
        self.nodes.iter().map(|n| n.sent).sum()
    }

    pub fn decoded(&self) -> u64 {
        self.nodes.iter().map(|n| n.decoded).sum()
    }

    pub fn acked(&self) -> u64 {
        self.nodes.iter().map(|n| n.acked).sum()
    }

    pub fn prr(&self) -> f64 {
        ratio(self.decoded(), self.sent())
    }

    pub fn pdr(&self) -> f64 {
        ratio(self.acked(), self.sent())
    }

    /// Sum of per-node throughputs.
    pub fn throughput_bps(&self) -> f64 {
        self.nodes.iter().map(|n| n.throughput_bps()).sum()
    }

    /// Mean over every acknowledged packet of every node.
    pub fn mean_delay_ms(&self) -> f64 {
        let all: Vec<f64> = self.nodes.iter().flat_map(|n| n.delays_ms.iter().copied()).collect();
        mean(&all)
    }

    pub fn energy_j(&self) -> f64 {
        self.nodes.iter().map(|n| n.energy_j).sum()
    }

    pub fn energy_per_bit_j(&self) -> f64 {
        let bits: u64 = self.nodes.iter().map(|n| n.delivered_payload_bits).sum();
        if bits == 0 {
            0.0
        } else {
            self.energy_j() / bits as f64
        }
    }

    pub fn node(&self, i: usize) -> Option<&NodeMetrics> {
        self.nodes.iter().find(|n| n.node == i)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub const METRICS_HEADER: [&str; 17] = [
    "scenario",
    "case",
    "node",
    "subcarrier",
    "distance_m",
    "tx_power_dbm",
    "sent",
    "decoded",
    "acked",
    "dropped",
    "prr",
    "pdr",
    "throughput_kbps",
    "mean_delay_ms",
    "energy_mj",
    "energy_per_bit_uj",
    "airtime_s",
];

/// Accumulates `metrics.csv` rows.
#[derive(Debug, Default)]
pub struct MetricsTable {
    rows: Vec<Vec<String>>,
}

impl MetricsTable {
    pub fn add(&mut self, scenario: &str, case: &str, m: &Metrics) {
        for n in &m.nodes {
            self.rows.push(vec![
                scenario.to_string(),
                case.to_string(),
                n.node.to_string(),
                n.subcarrier.to_string(),
                format!("{:.1}", n.distance_m),
                format!("{:.1}", n.tx_power_dbm),
                n.sent.to_string(),
                n.decoded.to_string(),
                n.acked.to_string(),
                n.dropped.to_string(),
                format!("{:.4}", n.prr()),
                format!("{:.4}", n.pdr()),
                format!("{:.4}", n.throughput_bps() / 1e3),
                format!("{:.3}", n.mean_delay_ms()),
                format!("{:.4}", n.energy_j * 1e3),
                format!("{:.4}", n.energy_per_bit_j() * 1e6),
                format!("{:.4}", n.airtime_s),
            ]);
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut t = CsvTable::new(&METRICS_HEADER);
        for r in &self.rows {
            t.row(r.clone());
        }
        t.to_csv()
    }
}

/// A small header+rows table rendered with the `csv` crate.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn row(&mut self, r: Vec<String>) {
        debug_assert_eq!(r.len(), self.header.len());
        self.rows.push(r);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(|e| Error::Io(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| Error::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}
