use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::SubcarrierId;

/// Simulation time in wideband sample ticks.
pub type SimTime = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeMode {
    Sleep,
    InitialBackoff,
    Cca,
    CongestionBackoff,
    Transmit,
    AwaitAck,
    Receive,
}

impl fmt::Display for NodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeMode::Sleep => "sleep",
            NodeMode::InitialBackoff => "initial_backoff",
            NodeMode::Cca => "cca",
            NodeMode::CongestionBackoff => "congestion_backoff",
            NodeMode::Transmit => "transmit",
            NodeMode::AwaitAck => "await_ack",
            NodeMode::Receive => "receive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MacEvent {
    Wake,
    Timer,
    CcaResult {
        busy: bool,
    },
    AckBit {
        set: bool,
    },
    AckTimeout,
    /// Start listening on the downlink for a broadcast.
    Listen,
}

impl fmt::Display for MacEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MacEvent::Wake => f.write_str("wake"),
            MacEvent::Timer => f.write_str("timer"),
            MacEvent::CcaResult { busy } => write!(f, "cca_result(busy={busy})"),
            MacEvent::AckBit { set } => write!(f, "ack_bit(set={set})"),
            MacEvent::AckTimeout => f.write_str("ack_timeout"),
            MacEvent::Listen => f.write_str("listen"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacAction {
    None,
    StartCca,
    Transmit,
    ListenDownlink,
    Sleep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacConfig {
    pub initial_backoff_ms: f64,
    pub congestion_backoff_ms: f64,
    pub max_retries: u32,
    pub cca_duration_us: f64,
    /// Join slots a node may use before it gives up.
    pub join_attempts: u32,
    /// Minimum join preamble SNR accepted by the BS, dB.
    pub join_min_snr_db: f64,
    /// Ticks per millisecond, i.e. the wideband sample rate / 1000.
    #[serde(skip)]
    pub ticks_per_ms: f64,
}

impl Default for MacConfig {
    fn default() -> Self {
        Self {
            initial_backoff_ms: 32.0,
            congestion_backoff_ms: 64.0,
            max_retries: 8,
            cca_duration_us: 320.0,
            join_attempts: 16,
            join_min_snr_db: 6.0,
            ticks_per_ms: 8_000.0,
        }
    }
}

impl MacConfig {
    fn draw<R: Rng + ?Sized>(&self, window_ms: f64, rng: &mut R) -> SimTime {
        (rng.random::<f64>() * window_ms * self.ticks_per_ms).floor() as SimTime
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeMacState {
    pub mode: NodeMode,
    pub assigned_subcarrier: SubcarrierId,
    pub backoff_deadline: Option<SimTime>,
    pub retry_count: u32,
    /// (δf_i, δf_d) in Hz, as fed back at join and from the node's own motion.
    pub cfo_feedback: (f64, f64),
}

impl NodeMacState {
    pub fn new(assigned_subcarrier: SubcarrierId) -> Self {
        Self {
            mode: NodeMode::Sleep,
            assigned_subcarrier,
            backoff_deadline: None,
            retry_count: 0,
            cfo_feedback: (0.0, 0.0),
        }
    }
}

/// Advances a node's CSMA/CA machine by one event.
///
/// wake → initial backoff → CCA → (clear: transmit | busy: congestion backoff
/// → CCA …) → await ACK → sleep.  An ACK timeout re-enters the congestion
/// backoff until `max_retries` retransmissions have been spent, after which
/// the packet is dropped and the node sleeps.  Backoff deadlines are returned
/// in `backoff_deadline`; the caller delivers `Timer` when it expires.
pub fn node_step<R: Rng + ?Sized>(
    state: &NodeMacState,
    event: MacEvent,
    now: SimTime,
    cfg: &MacConfig,
    rng: &mut R,
) -> Result<(NodeMacState, MacAction)> {
    let mut next = state.clone();
    let action = match (state.mode, event) {
        (NodeMode::Sleep, MacEvent::Wake) => {
            next.mode = NodeMode::InitialBackoff;
            next.backoff_deadline = Some(now + cfg.draw(cfg.initial_backoff_ms, rng));
            MacAction::None
        }
        (NodeMode::InitialBackoff | NodeMode::CongestionBackoff, MacEvent::Timer) => {
            next.mode = NodeMode::Cca;
            next.backoff_deadline = None;
            MacAction::StartCca
        }
        (NodeMode::Cca, MacEvent::CcaResult { busy: false }) => {
            next.mode = NodeMode::Transmit;
            MacAction::Transmit
        }
        (NodeMode::Cca, MacEvent::CcaResult { busy: true }) => {
            next.mode = NodeMode::CongestionBackoff;
            next.backoff_deadline = Some(now + cfg.draw(cfg.congestion_backoff_ms, rng));
            MacAction::None
        }
        (NodeMode::Transmit, MacEvent::Timer) => {
            next.mode = NodeMode::AwaitAck;
            MacAction::ListenDownlink
        }
        (NodeMode::AwaitAck, MacEvent::AckBit { set: true }) => {
            next.mode = NodeMode::Sleep;
            next.retry_count = 0;
            MacAction::Sleep
        }
        (NodeMode::AwaitAck, MacEvent::AckBit { set: false }) => MacAction::None,
        (NodeMode::AwaitAck, MacEvent::AckTimeout) => {
            if state.retry_count < cfg.max_retries {
                next.retry_count += 1;
                next.mode = NodeMode::CongestionBackoff;
                next.backoff_deadline = Some(now + cfg.draw(cfg.congestion_backoff_ms, rng));
                MacAction::None
            } else {
                next.mode = NodeMode::Sleep;
                next.retry_count = 0;
                MacAction::Sleep
            }
        }
        (NodeMode::Sleep, MacEvent::Listen) => {
            next.mode = NodeMode::Receive;
            MacAction::ListenDownlink
        }
        (NodeMode::Receive, MacEvent::Timer) => {
            next.mode = NodeMode::Sleep;
            MacAction::Sleep
        }
        (mode, ev) => {
            return Err(Error::ProtocolViolation { mode: mode.to_string(), event: ev.to_string() });
        }
    };
    Ok((next, action))
}
