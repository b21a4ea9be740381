//! Protocol trace: one record per protocol event, written as
//! `time_us,entity,event,subcarrier,detail` lines.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use super::energy::RadioState;
use crate::mac::SimTime;
use crate::phy::{SpectrumPlan, SubcarrierId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Entity {
    Bs,
    Node(usize),
    Interferer,
}

impl Entity {
    pub fn node(&self) -> Option<usize> {
        match self {
            Entity::Node(n) => Some(*n),
            _ => None,
        }
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entity::Bs => f.write_str("bs"),
            Entity::Node(n) => write!(f, "node{n}"),
            Entity::Interferer => f.write_str("interferer"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent {
    Join { delta_f_hz: f64 },
    Wake { seq: u64 },
    Backoff { congestion: bool, until: SimTime },
    CcaClear,
    CcaBusy { power_dbm: f64 },
    TxStart { seq: u64, attempt: u32, power_dbm: f64, bits: usize, probe: bool },
    DecodeOk { node: usize, seq: u64, payload_bits: usize, probe: bool },
    DecodeFail { node: usize, seq: u64, reason: &'static str },
    AckTxStart { entries: Vec<(SubcarrierId, usize)>, end: SimTime },
    AckTxEnd,
    AckRx { seq: u64, delay_us: f64 },
    AckMissed { seq: u64 },
    AckTimeout { seq: u64, retry: u32 },
    Drop { seq: u64 },
    AtpcProbe { power_dbm: f64, pdr: f64 },
    AtpcFit { a_hat: f64, b_hat: f64 },
    AtpcSelect { power_dbm: f64, reason: &'static str },
    InterfererBurst { tones: usize },
    DownlinkTx { node: usize, seq: u64 },
    DownlinkRx { seq: u64, ok: bool },
    FailoverAnnounce { to: SubcarrierId },
    FailoverSwitch { from: SubcarrierId, to: SubcarrierId },
    Radio { state: RadioState, start: SimTime, end: SimTime, probe: bool },
}

impl TraceEvent {
    pub fn name(&self) -> &'static str {
        match self {
            TraceEvent::Join { .. } => "join",
            TraceEvent::Wake { .. } => "wake",
            TraceEvent::Backoff { .. } => "backoff",
            TraceEvent::CcaClear => "cca_clear",
            TraceEvent::CcaBusy { .. } => "cca_busy",
            TraceEvent::TxStart { .. } => "tx_start",
            TraceEvent::DecodeOk { .. } => "decode_ok",
            TraceEvent::DecodeFail { .. } => "decode_fail",
            TraceEvent::AckTxStart { .. } => "ack_tx_start",
            TraceEvent::AckTxEnd => "ack_tx_end",
            TraceEvent::AckRx { .. } => "ack_rx",
            TraceEvent::AckMissed { .. } => "ack_missed",
            TraceEvent::AckTimeout { .. } => "ack_timeout",
            TraceEvent::Drop { .. } => "drop",
            TraceEvent::AtpcProbe { .. } => "atpc_probe",
            TraceEvent::AtpcFit { .. } => "atpc_fit",
            TraceEvent::AtpcSelect { .. } => "atpc_select",
            TraceEvent::InterfererBurst { .. } => "burst",
            TraceEvent::DownlinkTx { .. } => "downlink_tx",
            TraceEvent::DownlinkRx { .. } => "downlink_rx",
            TraceEvent::FailoverAnnounce { .. } => "failover_announce",
            TraceEvent::FailoverSwitch { .. } => "failover_switch",
            TraceEvent::Radio { state: RadioState::Tx { .. }, .. } => "radio_tx",
            TraceEvent::Radio { state: RadioState::Rx, .. } => "radio_rx",
        }
    }

    /// `key=value` pairs separated by `;`.
    pub fn detail(&self, sample_rate: f64) -> String {
        let us = |t: SimTime| t as f64 * 1e6 / sample_rate;
        match self {
            TraceEvent::Join { delta_f_hz } => format!("delta_f_hz={delta_f_hz:.3}"),
            TraceEvent::Wake { seq } => format!("seq={seq}"),
            TraceEvent::Backoff { congestion, until } => {
                format!("window={};until_us={:.3}", if *congestion { "congestion" } else { "initial" }, us(*until))
            }
            TraceEvent::CcaClear | TraceEvent::AckTxEnd => String::new(),
            TraceEvent::CcaBusy { power_dbm } => format!("power_dbm={power_dbm:.2}"),
            TraceEvent::TxStart { seq, attempt, power_dbm, bits, probe } => {
                format!("seq={seq};attempt={attempt};power_dbm={power_dbm:.1};bits={bits};probe={}", *probe as u8)
            }
            TraceEvent::DecodeOk { node, seq, payload_bits, probe } => {
                format!("node={node};seq={seq};payload_bits={payload_bits};probe={}", *probe as u8)
            }
            TraceEvent::DecodeFail { node, seq, reason } => format!("node={node};seq={seq};reason={reason}"),
            TraceEvent::AckTxStart { entries, end } => {
                let mut s = String::from("acks=");
                for (i, (sub, node)) in entries.iter().enumerate() {
                    if i > 0 {
                        s.push(' ');
                    }
                    let _ = write!(s, "{sub}:{node}");
                }
                let _ = write!(s, ";end_us={:.3}", us(*end));
                s
            }
            TraceEvent::AckRx { seq, delay_us } => format!("seq={seq};delay_us={delay_us:.3}"),
            TraceEvent::AckMissed { seq } | TraceEvent::Drop { seq } => format!("seq={seq}"),
            TraceEvent::AckTimeout { seq, retry } => format!("seq={seq};retry={retry}"),
            TraceEvent::AtpcProbe { power_dbm, pdr } => format!("power_dbm={power_dbm:.1};pdr={pdr:.4}"),
            TraceEvent::AtpcFit { a_hat, b_hat } => format!("a_hat={a_hat:.6};b_hat={b_hat:.6}"),
            TraceEvent::AtpcSelect { power_dbm, reason } => format!("power_dbm={power_dbm:.1};reason={reason}"),
            TraceEvent::InterfererBurst { tones } => format!("tones={tones}"),
            TraceEvent::DownlinkTx { node, seq } => format!("node={node};seq={seq}"),
            TraceEvent::DownlinkRx { seq, ok } => format!("seq={seq};ok={}", *ok as u8),
            TraceEvent::FailoverAnnounce { to } => format!("to={to}"),
            TraceEvent::FailoverSwitch { from, to } => format!("from={from};to={to}"),
            TraceEvent::Radio { state, start, end, probe } => {
                let p = match state {
                    RadioState::Tx { power_dbm } => format!("power_dbm={power_dbm:.1};"),
                    RadioState::Rx => String::new(),
                };
                format!("{p}start_us={:.3};end_us={:.3};probe={}", us(*start), us(*end), *probe as u8)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub entity: Entity,
    pub subcarrier: Option<SubcarrierId>,
    pub event: TraceEvent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub sample_rate: f64,
    pub node_count: usize,
    /// Interval over which idle energy is charged.
    pub span: (SimTime, SimTime),
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new(sample_rate: f64, node_count: usize) -> Self {
        Self { sample_rate, node_count, span: (0, 0), records: Vec::new() }
    }

    pub fn push(&mut self, r: TraceRecord) {
        self.records.push(r);
    }

    pub fn log(&mut self, time: SimTime, entity: Entity, subcarrier: Option<SubcarrierId>, event: TraceEvent) {
        self.records.push(TraceRecord { time, entity, subcarrier, event });
    }

    /// Stable sort by time, keeping same-tick records in emission order.
    pub fn finish(&mut self) {
        self.records.sort_by_key(|r| r.time);
    }

    pub fn count(&self, name: &str) -> usize {
        self.records.iter().filter(|r| r.event.name() == name).count()
    }

    pub fn to_log(&self) -> String {
        let mut out = String::from("time_us,entity,event,subcarrier,detail\n");
        for r in &self.records {
            let sub = r.subcarrier.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:.3},{},{},{},{}",
                r.time as f64 * 1e6 / self.sample_rate,
                r.entity,
                r.event.name(),
                sub,
                r.event.detail(self.sample_rate)
            );
        }
        out
    }
}

/// A broken protocol rule found in a trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub time: SimTime,
    pub rule: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={} {}: {}", self.time, self.rule, self.detail)
    }
}

/// Checks the MAC rules over a finished trace:
///
/// * every `tx_start` follows a clear CCA by the same node at the same tick;
/// * each ACK epoch lists exactly the decodes since the previous epoch;
/// * every decode is acknowledged within two ACK durations;
/// * no uplink data on the join or downlink subcarriers, and ACKs only on the downlink.
pub fn check_invariants(trace: &Trace, plan: &SpectrumPlan) -> Vec<Violation> {
    let mut v = Vec::new();
    let mut push = |time, rule, detail: String| v.push(Violation { time, rule, detail });
    let mut last_clear: BTreeMap<usize, SimTime> = BTreeMap::new();
    let mut pending: Vec<(SubcarrierId, usize, SimTime)> = Vec::new();
    let mut downlink = plan.downlink_index;
    let mut epochs: Vec<(SimTime, SimTime, Vec<SimTime>)> = Vec::new();

    for r in &trace.records {
        match (&r.event, r.entity) {
            (TraceEvent::CcaClear, Entity::Node(n)) => {
                last_clear.insert(n, r.time);
            }
            (TraceEvent::CcaBusy { .. }, Entity::Node(n)) => {
                last_clear.remove(&n);
            }
            (TraceEvent::TxStart { .. }, Entity::Node(n)) => {
                if last_clear.remove(&n) != Some(r.time) {
                    push(r.time, "transmit_while_busy", format!("node{n} transmitted without a clear CCA"));
                }
                if let Some(s) = r.subcarrier {
                    if s == plan.join_index || s == downlink {
                        push(r.time, "reserved_subcarrier", format!("node{n} sent data on {s}"));
                    }
                }
            }
            (TraceEvent::DecodeOk { node, .. }, Entity::Bs) => {
                pending.push((r.subcarrier.unwrap_or(0), *node, r.time));
            }
            (TraceEvent::AckTxStart { entries, end }, Entity::Bs) => {
                if r.subcarrier != Some(downlink) {
                    push(r.time, "ack_off_downlink", format!("ACK on {:?}", r.subcarrier));
                }
                let mut want: Vec<(SubcarrierId, usize)> = pending.iter().map(|p| (p.0, p.1)).collect();
                let mut got = entries.clone();
                want.sort_unstable();
                got.sort_unstable();
                if want != got {
                    push(r.time, "ack_bijection", format!("epoch {got:?} but decoded {want:?}"));
                }
                epochs.push((r.time, *end, pending.iter().map(|p| p.2).collect()));
                pending.clear();
            }
            (TraceEvent::FailoverSwitch { to, .. }, Entity::Bs) => downlink = *to,
            _ => {}
        }
    }
    for p in &pending {
        push(p.2, "ack_bijection", format!("decode of node{} never acknowledged", p.1));
    }
    let max_dur = epochs.iter().map(|e| e.1 - e.0).max().unwrap_or(0);
    for (_, end, decodes) in &epochs {
        for &t in decodes {
            if end - t > 2 * max_dur {
                push(t, "deferred_ack", format!("ACK after {} ticks, bound {}", end - t, 2 * max_dur));
            }
        }
    }
    v
}
