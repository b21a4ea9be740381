//! Discrete-event network run: joins, CSMA/CA uplink, ACK epochs on the
//! downlink, ATPC and an optional interferer.  Time is counted in wideband
//! sample ticks; every reception is computed at block level by the analytic
//! channelizer.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::rc::Rc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::SimConfig;
use super::energy::{energy_consumed, RadioState};
use super::metrics::{Metrics, NodeMetrics};
use super::trace::{Entity, Trace, TraceEvent};
use crate::atpc::{fit_initial, select_power, update_intercept, AtpcModel, PdrSamples};
use crate::channel::{awgn, dbm_to_mw, doppler_shift_hz, path_loss_db, rayleigh_gain, MobilityState, OscillatorModel};
use crate::error::{Error, Result};
use crate::mac::{
    join, node_step, AckEpoch, BsState, JoinRequest, MacAction, MacConfig, MacEvent, NodeMacState, NodeMode, SimTime,
};
use crate::phy::packet::OVERHEAD_BITS;
use crate::phy::synth::{accumulate, BlockGrid, Emission};
use crate::phy::{ModulationKind, ModulationScheme, Receiver, RxConfig, SnowPacket, SpectrumPlan, SubcarrierId};

/// Metrics and trace of one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub trace: Trace,
}

/// Independent RNG stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

const STREAM_BS: u64 = 1;
const STREAM_INTERFERER: u64 = 2;
const STREAM_JOIN: u64 = 3;
const STREAM_NODE: u64 = 1 << 20;
const STREAM_CHANNEL: u64 = 1 << 21;

/// A transmission on the air, as seen by the BS.
#[derive(Debug, Clone)]
struct Tx {
    node: Option<usize>,
    sub: Option<SubcarrierId>,
    start: SimTime,
    end: SimTime,
    bits: Rc<Vec<bool>>,
    kind: ModulationKind,
    symbol_rate: f64,
    freq_hz: f64,
    gain: Complex64,
    power_dbm: f64,
    origin: [f64; 2],
}

#[derive(Debug, Clone)]
struct Packet {
    seq: u64,
    payload: Rc<Vec<u8>>,
    bits: Rc<Vec<bool>>,
    first_tx: Option<SimTime>,
    probe: bool,
    delivered: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum AtpcPhase {
    Tracking,
    Probing { level: usize, sent: usize, acked: usize, pairs: Vec<(f64, f64)> },
}

#[derive(Debug, Clone)]
struct AtpcState {
    enabled: bool,
    phase: AtpcPhase,
    model: Option<AtpcModel>,
    window: (usize, usize),
    readings: Vec<(f64, f64)>,
}

struct NodeSim {
    id: usize,
    pos0: [f64; 2],
    velocity: [f64; 2],
    sub: SubcarrierId,
    mac: NodeMacState,
    osc: OscillatorModel,
    ppm_est: f64,
    tx_power: f64,
    interval: [f64; 2],
    background: bool,
    rng: ChaCha8Rng,
    chan: ChaCha8Rng,
    timer_gen: u64,
    uid: u64,
    next_seq: u64,
    data_sent: u64,
    transmissions: u64,
    packet: Option<Packet>,
    last_tx: Option<Tx>,
    rx_open: Option<SimTime>,
    done: bool,
    atpc: AtpcState,
    m: NodeMetrics,
}

impl NodeSim {
    fn position(&self, t: SimTime, fs: f64) -> [f64; 2] {
        let s = t as f64 / fs;
        [self.pos0[0] + self.velocity[0] * s, self.pos0[1] + self.velocity[1] * s]
    }

    fn probing(&self) -> bool {
        matches!(self.atpc.phase, AtpcPhase::Probing { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    Wake(usize),
    Backoff(usize, u64),
    CcaDone(usize, u64),
    TxEnd(usize),
    AckTimeout(usize, u64),
    AckEnd,
    Burst,
}

struct InFlightAck {
    epoch: AckEpoch,
    entries: Vec<(SubcarrierId, usize)>,
    payload: Rc<Vec<u8>>,
    bits: Rc<Vec<bool>>,
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    plan: &'a SpectrumPlan,
    fs: f64,
    bl: usize,
    noise_var: f64,
    heap: BinaryHeap<Reverse<(SimTime, u64, Ev)>>,
    seq: u64,
    nodes: Vec<NodeSim>,
    txs: Vec<Tx>,
    bs: BsState,
    bs_rng: ChaCha8Rng,
    int_rng: ChaCha8Rng,
    ack: Option<InFlightAck>,
    ack_timeout: SimTime,
    uplink_rx: Receiver,
    downlink_rx: Receiver,
    mac: MacConfig,
    probe_mac: MacConfig,
    trace: Trace,
    data_start: SimTime,
    now: SimTime,
    ack_count: u64,
    cca_busy: u64,
    foreground_left: usize,
    events: u64,
}

/// Runs one network configuration to completion.
pub fn run(config: &SimConfig) -> Result<RunOutput> {
    config.validate()?;
    let mut e = Engine::new(config)?;
    e.join_all()?;
    e.start_data();
    e.event_loop()?;
    e.finish()
}

fn distance(p: [f64; 2]) -> f64 {
    p[0].hypot(p[1]).max(1.0)
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SimConfig) -> Result<Self> {
        let plan = &cfg.spectrum;
        let fs = plan.sample_rate;
        let bl = plan.fft_size();
        let ideal = cfg.channel.ideal;
        let noise_var = if ideal { 0.0 } else { dbm_to_mw(cfg.channel.noise_psd_dbm_hz) * fs };
        let mut mac = cfg.mac;
        mac.ticks_per_ms = fs / 1e3;
        let probe_mac = MacConfig { max_retries: 0, ..mac };

        let up_scheme = ModulationScheme::new(cfg.radio.modulation, cfg.radio.uplink_symbol_rate)?;
        let mut up = RxConfig::new(up_scheme, fs, bl);
        up.use_csi = cfg.compensation.csi;
        let dl_scheme = ModulationScheme::new(ModulationKind::Ook, cfg.radio.downlink_symbol_rate)?;
        let dl = RxConfig::new(dl_scheme, fs, bl);

        let mut nodes = Vec::with_capacity(cfg.topology.node_count);
        for i in 0..cfg.topology.node_count {
            let o = cfg.node_override(i);
            let mut rng = stream_rng(cfg.seed, STREAM_NODE + i as u64);
            let ppm = if ideal { 0.0 } else { cfg.channel.ppm_bound * (2.0 * rng.random::<f64>() - 1.0) };
            let velocity = cfg
                .mobility
                .iter()
                .find(|m| m.node == i)
                .map(|m| [m.speed_mps * m.heading_rad.cos(), m.speed_mps * m.heading_rad.sin()])
                .unwrap_or([0.0, 0.0]);
            let atpc_on = o.atpc.unwrap_or(cfg.compensation.atpc);
            nodes.push(NodeSim {
                id: i,
                pos0: cfg.position(i),
                velocity,
                sub: 0,
                mac: NodeMacState::new(0),
                osc: OscillatorModel::new(ppm, 0.0, cfg.channel.ppm_bound.max(ppm.abs()))?,
                ppm_est: 0.0,
                tx_power: o.tx_power_dbm.unwrap_or(cfg.radio.tx_power_dbm),
                interval: o.interval_ms.unwrap_or(cfg.traffic.interval_ms),
                background: o.background,
                rng,
                chan: stream_rng(cfg.seed, STREAM_CHANNEL + i as u64),
                timer_gen: 0,
                uid: 0,
                next_seq: 0,
                data_sent: 0,
                transmissions: 0,
                packet: None,
                last_tx: None,
                rx_open: None,
                done: false,
                atpc: AtpcState {
                    enabled: atpc_on,
                    phase: AtpcPhase::Tracking,
                    model: None,
                    window: (0, 0),
                    readings: Vec::new(),
                },
                m: NodeMetrics { node: i, distance_m: distance(cfg.position(i)), ..Default::default() },
            });
        }
        let foreground_left = nodes.iter().filter(|n| !n.background).count();
        Ok(Self {
            cfg,
            plan,
            fs,
            bl,
            noise_var,
            heap: BinaryHeap::new(),
            seq: 0,
            nodes,
            txs: Vec::new(),
            bs: BsState::new(plan),
            bs_rng: stream_rng(cfg.seed, STREAM_BS),
            int_rng: stream_rng(cfg.seed, STREAM_INTERFERER),
            ack: None,
            ack_timeout: 0,
            uplink_rx: Receiver::new(up),
            downlink_rx: Receiver::new(dl),
            mac,
            probe_mac,
            trace: Trace::new(fs, cfg.topology.node_count),
            data_start: 0,
            now: 0,
            ack_count: 0,
            cca_busy: 0,
            foreground_left,
            events: 0,
        })
    }

    fn schedule(&mut self, t: SimTime, ev: Ev) {
        self.seq += 1;
        self.heap.push(Reverse((t, self.seq, ev)));
    }

    fn ticks(&self, seconds: f64) -> SimTime {
        (seconds * self.fs).round() as SimTime
    }

    fn rx_dbm(&self, tx_dbm: f64, d: f64, f: f64) -> Result<f64> {
        Ok(tx_dbm - path_loss_db(self.cfg.channel.pathloss, d, f)?)
    }

    fn join_all(&mut self) -> Result<()> {
        let plan = self.plan;
        let f_join = plan.center_hz(plan.join_index);
        let req_bits = OVERHEAD_BITS + 32;
        let resp_bits = OVERHEAD_BITS + 48;
        let slot = self.ticks(req_bits as f64 / self.cfg.radio.join_symbol_rate)
            + self.ticks(resp_bits as f64 / self.cfg.radio.downlink_symbol_rate)
            + self.ticks(1e-3);
        let mut rng = stream_rng(self.cfg.seed, STREAM_JOIN);
        let mut t = 0;
        for i in 0..self.nodes.len() {
            let n = &self.nodes[i];
            let mean_amp = dbm_to_mw(self.rx_dbm(n.tx_power, distance(n.pos0), f_join)?).sqrt();
            let offset = n.osc.offset_hz(f_join, 0);
            let mut attempt = 0;
            let res = loop {
                let gain = fade(self.cfg, &mut rng) * mean_amp;
                let mut req = JoinRequest::new(i, offset, gain, self.noise_var / self.fs);
                req.symbol_rate = self.cfg.radio.join_symbol_rate;
                req.estimate_cfo = self.cfg.compensation.cfo;
                req.min_snr_db = self.cfg.mac.join_min_snr_db;
                attempt += 1;
                match join(&mut self.bs, plan, &req, &mut rng) {
                    Ok(res) => break res,
                    Err(Error::JoinTimeout(_)) if attempt < self.cfg.mac.join_attempts => t += slot,
                    Err(e) => return Err(e),
                }
            };
            let n = &mut self.nodes[i];
            n.sub = res.subcarrier;
            n.mac = NodeMacState::new(res.subcarrier);
            n.ppm_est = res.estimate.as_ref().map(|e| e.ppm_bs).unwrap_or(0.0);
            n.mac.cfo_feedback = (res.delta_f_i, 0.0);
            n.m.subcarrier = res.subcarrier;
            self.trace.log(t, Entity::Node(i), Some(res.subcarrier), TraceEvent::Join { delta_f_hz: res.delta_f_i });
            t += slot;
        }
        self.data_start = t;
        let shared: usize = self.bs.subcarrier_assignments.values().filter(|&&s| self.bs.sharers(s) > 1).count();
        let max_payload = (plan.num_subcarriers as usize).div_ceil(8) + 2 * shared;
        let max_ack = self.ticks((OVERHEAD_BITS + 8 * max_payload) as f64 / self.cfg.radio.downlink_symbol_rate);
        self.ack_timeout = 2 * max_ack + self.ticks(1e-3) + self.bl as u64;
        Ok(())
    }

    fn start_data(&mut self) {
        for i in 0..self.nodes.len() {
            let gap = self.draw_interval(i);
            self.schedule(self.data_start + gap, Ev::Wake(i));
        }
        if self.cfg.interferer.is_some() {
            self.schedule(self.data_start, Ev::Burst);
        }
    }

    fn draw_interval(&mut self, i: usize) -> SimTime {
        let [lo, hi] = self.nodes[i].interval;
        let ms = lo + (hi - lo) * self.nodes[i].rng.random::<f64>();
        self.ticks(ms * 1e-3)
    }

    fn event_loop(&mut self) -> Result<()> {
        while let Some(Reverse((t, _, ev))) = self.heap.pop() {
            self.now = t;
            self.events += 1;
            if self.events % 4096 == 0 {
                let horizon = t.saturating_sub(self.ticks(2.0));
                self.txs.retain(|x| x.end >= horizon);
            }
            match ev {
                Ev::Wake(n) => self.on_wake(n)?,
                Ev::Backoff(n, g) => self.on_backoff(n, g)?,
                Ev::CcaDone(n, g) => self.on_cca(n, g)?,
                Ev::TxEnd(n) => self.on_tx_end(n)?,
                Ev::AckTimeout(n, uid) => self.on_ack_timeout(n, uid)?,
                Ev::AckEnd => self.on_ack_end()?,
                Ev::Burst => self.on_burst()?,
            }
        }
        Ok(())
    }

    fn step(&mut self, n: usize, ev: MacEvent) -> Result<MacAction> {
        let cfg = if self.nodes[n].packet.as_ref().is_some_and(|p| p.probe) { self.probe_mac } else { self.mac };
        let node = &mut self.nodes[n];
        let (next, action) = node_step(&node.mac, ev, self.now, &cfg, &mut node.rng)?;
        node.mac = next;
        Ok(action)
    }

    fn arm_backoff(&mut self, n: usize, congestion: bool) {
        let node = &mut self.nodes[n];
        node.timer_gen += 1;
        let g = node.timer_gen;
        let until = node.mac.backoff_deadline.unwrap_or(self.now);
        let sub = Some(node.sub);
        self.trace.log(self.now, Entity::Node(n), sub, TraceEvent::Backoff { congestion, until });
        self.schedule(until, Ev::Backoff(n, g));
    }

    fn on_wake(&mut self, n: usize) -> Result<()> {
        if self.nodes[n].done {
            return Ok(());
        }
        let probe = self.nodes[n].probing();
        let node = &mut self.nodes[n];
        let len = self.cfg.traffic.payload_bytes;
        let payload: Vec<u8> = (0..len).map(|_| node.rng.random::<u8>()).collect();
        let pkt = SnowPacket::new(payload.clone())?;
        let seq = node.next_seq;
        node.next_seq += 1;
        if !probe {
            node.data_sent += 1;
        }
        node.packet = Some(Packet {
            seq,
            payload: Rc::new(payload),
            bits: Rc::new(pkt.to_bits()),
            first_tx: None,
            probe,
            delivered: false,
        });
        let sub = Some(node.sub);
        self.trace.log(self.now, Entity::Node(n), sub, TraceEvent::Wake { seq });
        self.step(n, MacEvent::Wake)?;
        self.arm_backoff(n, false);
        Ok(())
    }

    fn on_backoff(&mut self, n: usize, g: u64) -> Result<()> {
        if self.nodes[n].timer_gen != g {
            return Ok(());
        }
        if self.step(n, MacEvent::Timer)? == MacAction::StartCca {
            let cca = self.ticks(self.mac.cca_duration_us * 1e-6);
            self.schedule(self.now + cca, Ev::CcaDone(n, g));
        }
        Ok(())
    }

    /// Received power on the node's own subcarrier from other transmitters
    /// active during `[from, to)`, in mW.
    fn sensed_mw(&self, n: usize, from: SimTime, to: SimTime) -> Result<f64> {
        let node = &self.nodes[n];
        let here = node.position(to, self.fs);
        let f = self.plan.center_hz(node.sub);
        let mut p = 0.0;
        for t in &self.txs {
            if t.sub != Some(node.sub) || t.node == Some(n) || t.start >= to || t.end <= from {
                continue;
            }
            let d = ((t.origin[0] - here[0]).hypot(t.origin[1] - here[1])).max(1.0);
            p += dbm_to_mw(self.rx_dbm(t.power_dbm, d, f)?);
        }
        Ok(p)
    }

    fn radio(&mut self, n: usize, state: RadioState, start: SimTime, end: SimTime) {
        let probe = self.nodes[n].packet.as_ref().is_some_and(|p| p.probe);
        let sub = Some(self.nodes[n].sub);
        self.trace.log(start, Entity::Node(n), sub, TraceEvent::Radio { state, start, end, probe });
    }

    fn on_cca(&mut self, n: usize, g: u64) -> Result<()> {
        if self.nodes[n].timer_gen != g || self.nodes[n].mac.mode != NodeMode::Cca {
            return Ok(());
        }
        let cca = self.ticks(self.mac.cca_duration_us * 1e-6);
        let from = self.now - cca;
        self.radio(n, RadioState::Rx, from, self.now);
        let p = self.sensed_mw(n, from, self.now)?;
        let threshold = self.cfg.radio.rx_sensitivity_dbm + self.cfg.radio.cca_margin_db;
        let busy = p > 0.0 && 10.0 * p.log10() > threshold;
        let sub = Some(self.nodes[n].sub);
        if busy {
            self.cca_busy += 1;
            self.trace.log(self.now, Entity::Node(n), sub, TraceEvent::CcaBusy { power_dbm: 10.0 * p.log10() });
        } else {
            self.trace.log(self.now, Entity::Node(n), sub, TraceEvent::CcaClear);
        }
        match self.step(n, MacEvent::CcaResult { busy })? {
            MacAction::Transmit => self.transmit(n),
            _ => {
                self.arm_backoff(n, true);
                Ok(())
            }
        }
    }

    fn doppler(&self, node: &NodeSim, at: [f64; 2], f: f64) -> Result<f64> {
        let v = node.velocity[0].hypot(node.velocity[1]);
        if v == 0.0 {
            return Ok(0.0);
        }
        let r = distance(at);
        let cos = (node.velocity[0] * -at[0] + node.velocity[1] * -at[1]) / (v * r);
        let mob = MobilityState {
            velocity_mps: v,
            angle_theta_rad: Some(cos.clamp(-1.0, 1.0).acos()),
            delta_s_m: 0.0,
            range_r_m: r,
        };
        doppler_shift_hz(&mob, f)
    }

    fn transmit(&mut self, n: usize) -> Result<()> {
        let now = self.now;
        let sym = self.cfg.radio.uplink_symbol_rate;
        let node = &self.nodes[n];
        let pkt = node.packet.clone().expect("transmit without a packet");
        let pos = node.position(now, self.fs);
        let f = self.plan.center_hz(node.sub);
        let d = distance(pos);
        let power = node.tx_power;
        let true_cfo = node.osc.offset_hz(f, node.transmissions) + self.doppler(node, pos, f)?;
        let pre = if self.cfg.compensation.cfo { node.mac.cfo_feedback.0 + self.doppler(node, pos, f)? } else { 0.0 };
        let mean = dbm_to_mw(self.rx_dbm(power, d, f)?).sqrt();
        let sub = node.sub;
        let len = crate::phy::symbol_boundary(pkt.bits.len(), self.fs / sym) as SimTime;
        let tx = Tx {
            node: Some(n),
            sub: Some(sub),
            start: now,
            end: now + len,
            bits: pkt.bits.clone(),
            kind: self.cfg.radio.modulation,
            symbol_rate: sym,
            freq_hz: self.plan.baseband_hz(sub) + true_cfo - pre,
            gain: Complex64::new(0.0, 0.0),
            power_dbm: power,
            origin: pos,
        };
        let cfg = self.cfg;
        let node = &mut self.nodes[n];
        let h = fade(cfg, &mut node.chan);
        let tx = Tx { gain: h * mean, ..tx };
        node.transmissions += 1;
        node.uid += 1;
        node.mac.cfo_feedback.1 = pre - node.mac.cfo_feedback.0;
        let attempt = node.mac.retry_count;
        if let Some(p) = node.packet.as_mut() {
            p.first_tx.get_or_insert(now);
        }
        if !pkt.probe {
            node.m.sent += 1;
            node.m.airtime_s += len as f64 / self.fs;
        }
        node.last_tx = Some(tx.clone());
        self.txs.push(tx);
        self.trace.log(
            now,
            Entity::Node(n),
            Some(sub),
            TraceEvent::TxStart { seq: pkt.seq, attempt, power_dbm: power, bits: pkt.bits.len(), probe: pkt.probe },
        );
        self.radio(n, RadioState::Tx { power_dbm: power }, now, now + len);
        self.schedule(now + len, Ev::TxEnd(n));
        Ok(())
    }

    fn on_tx_end(&mut self, n: usize) -> Result<()> {
        self.step(n, MacEvent::Timer)?;
        let uid = self.nodes[n].uid;
        self.nodes[n].rx_open = Some(self.now);
        self.schedule(self.now + self.ack_timeout, Ev::AckTimeout(n, uid));

        let tx = self.nodes[n].last_tx.clone().expect("tx end without a transmission");
        let pkt = self.nodes[n].packet.clone().expect("tx end without a packet");
        let ok = self.bs_decode(&tx, &pkt)?;
        let sub = tx.sub.unwrap_or(0);
        if ok {
            let node = &mut self.nodes[n];
            let first = !pkt.delivered;
            if let Some(p) = node.packet.as_mut() {
                p.delivered = true;
            }
            if !pkt.probe {
                node.m.decoded += 1;
                node.m.decoded_bits += pkt.bits.len() as u64;
                if first {
                    node.m.delivered_payload_bits += 8 * pkt.payload.len() as u64;
                }
            }
            self.trace.log(
                self.now,
                Entity::Bs,
                Some(sub),
                TraceEvent::DecodeOk { node: n, seq: pkt.seq, payload_bits: 8 * pkt.payload.len(), probe: pkt.probe },
            );
            self.bs.pending_acks.push((sub, n));
            if self.ack.is_none() {
                self.start_ack_epoch()?;
            }
        } else {
            self.trace.log(
                self.now,
                Entity::Bs,
                Some(sub),
                TraceEvent::DecodeFail { node: n, seq: pkt.seq, reason: "rx" },
            );
        }
        Ok(())
    }

    fn bs_decode(&mut self, tx: &Tx, pkt: &Packet) -> Result<bool> {
        let bl = self.bl as SimTime;
        let sps_wb = self.fs / tx.symbol_rate;
        let margin = sps_wb.ceil() as SimTime + bl;
        let ws = tx.start.saturating_sub(margin) / bl * bl;
        let we = tx.end + margin;
        let n_blocks = ((we - ws) / bl + 1) as usize;
        let wend = ws + n_blocks as SimTime * bl;
        let ems: Vec<Emission<'_>> = self
            .txs
            .iter()
            .filter(|t| t.start < wend && t.end > ws)
            .map(|t| Emission {
                bits: &t.bits,
                kind: t.kind,
                symbol_rate: t.symbol_rate,
                start: t.start as i64 - ws as i64,
                freq_hz: t.freq_hz,
                gain: t.gain,
            })
            .collect();
        let sub = tx.sub.unwrap_or(0);
        let grid =
            BlockGrid { sample_rate: self.fs, block_len: self.bl, n_blocks, extract_hz: self.plan.baseband_hz(sub) };
        let mut stream = vec![Complex64::new(0.0, 0.0); n_blocks];
        accumulate(&mut stream, &ems, &grid);
        if self.noise_var > 0.0 {
            for s in &mut stream {
                *s += awgn(&mut self.bs_rng, self.noise_var);
            }
        }
        let node = &self.nodes[tx.node.unwrap_or(0)];
        let mean_amp = dbm_to_mw(self.rx_dbm(tx.power_dbm, distance(node.pos0), self.plan.center_hz(sub))?).sqrt();
        let reference = (self.bl as f64).sqrt() * mean_amp;
        let nominal = (tx.start - ws) as f64 / bl as f64;
        let sps = sps_wb / bl as f64;
        let search = ((nominal - sps).floor() as i64, (nominal + sps).ceil() as i64);
        let out = self.uplink_rx.receive_with(&stream, search, reference);
        Ok(out.packet().is_some_and(|p| p.payload == *pkt.payload))
    }

    fn start_ack_epoch(&mut self) -> Result<()> {
        let entries = std::mem::take(&mut self.bs.pending_acks);
        if entries.is_empty() {
            return Ok(());
        }
        let epoch = AckEpoch::build(&entries, &self.bs, self.plan)?;
        let payload = epoch.payload();
        let bits = SnowPacket::new(payload.clone())?.to_bits();
        let len = crate::phy::symbol_boundary(bits.len(), self.fs / self.cfg.radio.downlink_symbol_rate) as SimTime;
        let end = self.now + len;
        self.trace.log(
            self.now,
            Entity::Bs,
            Some(self.bs.downlink_index),
            TraceEvent::AckTxStart { entries: entries.clone(), end },
        );
        self.ack = Some(InFlightAck { epoch, entries, payload: Rc::new(payload), bits: Rc::new(bits) });
        self.ack_count += 1;
        self.schedule(end, Ev::AckEnd);
        Ok(())
    }

    fn on_ack_end(&mut self) -> Result<()> {
        let Some(ack) = self.ack.take() else { return Ok(()) };
        self.trace.log(self.now, Entity::Bs, Some(self.bs.downlink_index), TraceEvent::AckTxEnd);
        for &(sub, n) in &ack.entries {
            if !ack.epoch.acknowledges(sub, n) || self.nodes[n].mac.mode != NodeMode::AwaitAck {
                continue;
            }
            let seq = self.nodes[n].packet.as_ref().map(|p| p.seq).unwrap_or(0);
            if self.node_decode_ack(n, &ack)? {
                self.step(n, MacEvent::AckBit { set: true })?;
                self.close_rx(n);
                let node = &mut self.nodes[n];
                let pkt = node.packet.take().expect("ack without a packet");
                let delay = (self.now - pkt.first_tx.unwrap_or(self.now)) as f64 / self.fs;
                if !pkt.probe {
                    node.m.acked += 1;
                    node.m.delays_ms.push(delay * 1e3);
                }
                let sub = Some(node.sub);
                self.trace.log(self.now, Entity::Node(n), sub, TraceEvent::AckRx { seq, delay_us: delay * 1e6 });
                self.attempt_outcome(n, pkt.probe, true)?;
                self.after_packet(n);
            } else {
                let sub = Some(self.nodes[n].sub);
                self.trace.log(self.now, Entity::Node(n), sub, TraceEvent::AckMissed { seq });
            }
        }
        self.start_ack_epoch()
    }

    fn node_decode_ack(&mut self, n: usize, ack: &InFlightAck) -> Result<bool> {
        let plan = self.plan;
        let dl = self.bs.downlink_index;
        let f = plan.center_hz(dl);
        let node = &self.nodes[n];
        let pos = node.position(self.now, self.fs);
        let d = distance(pos);
        let offset = -node.osc.offset_hz(f, node.transmissions) + self.doppler(node, pos, f)?;
        let correction =
            if self.cfg.compensation.cfo { f * node.ppm_est * 1e-6 - self.doppler(node, pos, f)? } else { 0.0 };
        let mut residual = offset + correction;
        if self.cfg.radio.node_afc && residual.abs() < self.cfg.radio.node_bandwidth_hz / 2.0 {
            residual = 0.0;
        }
        let mean = dbm_to_mw(self.rx_dbm(self.cfg.radio.bs_tx_power_dbm, d, f)?).sqrt();
        let mut chan = self.nodes[n].chan.clone();
        let h = fade(self.cfg, &mut chan);
        let bits = ack.bits.clone();
        let stream = downlink_stream(
            plan,
            self.bl,
            dl,
            &bits,
            self.cfg.radio.downlink_symbol_rate,
            residual,
            h * mean,
            self.noise_var,
            None,
            &mut chan,
        );
        self.nodes[n].chan = chan;
        let out = self.downlink_rx.receive(&stream.samples, stream.search);
        Ok(out.packet().is_some_and(|p| p.payload == *ack.payload))
    }

    fn close_rx(&mut self, n: usize) {
        if let Some(s) = self.nodes[n].rx_open.take() {
            self.radio(n, RadioState::Rx, s, self.now);
        }
    }

    fn on_ack_timeout(&mut self, n: usize, uid: u64) -> Result<()> {
        if self.nodes[n].uid != uid || self.nodes[n].mac.mode != NodeMode::AwaitAck {
            return Ok(());
        }
        self.close_rx(n);
        let probe = self.nodes[n].packet.as_ref().is_some_and(|p| p.probe);
        let seq = self.nodes[n].packet.as_ref().map(|p| p.seq).unwrap_or(0);
        let retry = self.nodes[n].mac.retry_count;
        let sub = Some(self.nodes[n].sub);
        self.trace.log(self.now, Entity::Node(n), sub, TraceEvent::AckTimeout { seq, retry });
        self.attempt_outcome(n, probe, false)?;
        match self.step(n, MacEvent::AckTimeout)? {
            MacAction::Sleep => {
                if !probe {
                    self.nodes[n].m.dropped += 1;
                }
                self.trace.log(self.now, Entity::Node(n), sub, TraceEvent::Drop { seq });
                self.nodes[n].packet = None;
                self.after_packet(n);
            }
            _ => self.arm_backoff(n, true),
        }
        Ok(())
    }

    /// Feeds one transmission outcome to the node's power control.
    fn attempt_outcome(&mut self, n: usize, probe: bool, acked: bool) -> Result<()> {
        let levels = self.cfg.atpc.levels.clone();
        let acfg = self.cfg.atpc.clone();
        let now = self.now;
        let node = &mut self.nodes[n];
        if !node.atpc.enabled {
            return Ok(());
        }
        let sub = Some(node.sub);
        let mut log = Vec::new();
        if probe {
            let mut finished = None;
            if let AtpcPhase::Probing { level, sent, acked: ok, pairs } = &mut node.atpc.phase {
                *sent += 1;
                *ok += acked as usize;
                if *sent == acfg.probe_packets {
                    let tp = levels.levels()[*level];
                    let pdr = *ok as f64 / *sent as f64;
                    pairs.push((tp, pdr));
                    log.push(TraceEvent::AtpcProbe { power_dbm: tp, pdr });
                    *level += 1;
                    *sent = 0;
                    *ok = 0;
                    if *level == levels.levels().len() {
                        finished = Some(std::mem::take(pairs));
                    } else {
                        node.tx_power = levels.levels()[*level];
                    }
                }
            }
            if let Some(pairs) = finished {
                node.atpc.phase = AtpcPhase::Tracking;
                let model = PdrSamples::new(pairs).and_then(|s| fit_initial(&s, acfg.pdr_threshold));
                match model {
                    Ok(m) => {
                        log.push(TraceEvent::AtpcFit { a_hat: m.a_hat, b_hat: m.b_hat });
                        node.atpc.model = Some(m);
                        let (p, reason) = choose(&m, &levels);
                        node.tx_power = p;
                        log.push(TraceEvent::AtpcSelect { power_dbm: p, reason });
                    }
                    Err(_) => {
                        node.tx_power = levels.max();
                        log.push(TraceEvent::AtpcSelect { power_dbm: levels.max(), reason: "singular_fit" });
                    }
                }
            }
        } else {
            node.atpc.window.0 += 1;
            node.atpc.window.1 += acked as usize;
            if node.atpc.window.0 == acfg.packets_per_reading {
                let pdr = node.atpc.window.1 as f64 / node.atpc.window.0 as f64;
                node.atpc.readings.push((node.tx_power, pdr));
                node.atpc.window = (0, 0);
            }
            if node.atpc.readings.len() == acfg.readings_per_period {
                let readings = PdrSamples::new(std::mem::take(&mut node.atpc.readings))?;
                let mean = readings.mean_pdr().unwrap_or(1.0);
                match node.atpc.model {
                    Some(m) => {
                        let m = update_intercept(&m, &readings)?;
                        node.atpc.model = Some(m);
                        let (p, reason) = choose(&m, &levels);
                        node.tx_power = p;
                        log.push(TraceEvent::AtpcSelect { power_dbm: p, reason });
                    }
                    None if mean < acfg.pdr_threshold => {
                        node.atpc.phase = AtpcPhase::Probing { level: 0, sent: 0, acked: 0, pairs: Vec::new() };
                        node.tx_power = levels.min();
                    }
                    None => {}
                }
            }
        }
        for ev in log {
            self.trace.log(now, Entity::Node(n), sub, ev);
        }
        Ok(())
    }

    fn after_packet(&mut self, n: usize) {
        let budget = self.cfg.traffic.packets_per_node;
        let deadline = if self.cfg.traffic.duration_s > 0.0 {
            self.data_start + self.ticks(self.cfg.traffic.duration_s)
        } else {
            SimTime::MAX
        };
        let node = &self.nodes[n];
        let more = if node.probing() {
            true
        } else if node.background {
            self.foreground_left > 0
        } else {
            (budget == 0 || node.data_sent < budget) && self.now < deadline
        };
        if more {
            let gap = self.draw_interval(n);
            self.schedule(self.now + gap, Ev::Wake(n));
        } else if !self.nodes[n].done {
            self.nodes[n].done = true;
            if !self.nodes[n].background {
                self.foreground_left -= 1;
            }
        }
    }

    fn on_burst(&mut self) -> Result<()> {
        let Some(icfg) = self.cfg.interferer else { return Ok(()) };
        if self.foreground_left == 0 {
            return Ok(());
        }
        let period = self.ticks(icfg.period_ms * 1e-3);
        self.schedule(self.now + period, Ev::Burst);
        let data = self.plan.data_subcarriers();
        let tones = (icfg.overlap_fraction * data.len() as f64).round() as usize;
        self.trace.log(self.now, Entity::Interferer, None, TraceEvent::InterfererBurst { tones });
        if tones == 0 {
            return Ok(());
        }
        let sym = self.cfg.radio.uplink_symbol_rate;
        let frame_bits = OVERHEAD_BITS + 8 * icfg.burst_bytes;
        let len = crate::phy::symbol_boundary(frame_bits, self.fs / sym) as SimTime;
        let start = self.now + (self.int_rng.random::<f64>() * period.saturating_sub(len) as f64) as SimTime;
        let first = self.int_rng.random_range(0..=data.len() - tones);
        let d = distance(icfg.position_m);
        for &sub in &data[first..first + tones] {
            let payload: Vec<u8> = (0..icfg.burst_bytes).map(|_| self.int_rng.random::<u8>()).collect();
            let bits = Rc::new(SnowPacket::new(payload)?.to_bits());
            let f = self.plan.center_hz(sub);
            let h = fade(self.cfg, &mut self.int_rng);
            let amp = dbm_to_mw(self.rx_dbm(icfg.tx_power_dbm, d, f)?).sqrt();
            let jitter = 2e3 * (2.0 * self.int_rng.random::<f64>() - 1.0);
            self.txs.push(Tx {
                node: None,
                sub: Some(sub),
                start,
                end: start + len,
                bits,
                kind: ModulationKind::Ook,
                symbol_rate: sym,
                freq_hz: self.plan.baseband_hz(sub) + jitter,
                gain: h * amp,
                power_dbm: icfg.tx_power_dbm,
                origin: icfg.position_m,
            });
        }
        Ok(())
    }

    fn finish(mut self) -> Result<RunOutput> {
        let end = self.now.max(self.data_start);
        self.trace.span = (self.data_start, end);
        self.trace.finish();
        let energy = energy_consumed(&self.trace, &self.cfg.energy)?;
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for n in self.nodes {
            let mut m = n.m;
            m.tx_power_dbm = n.tx_power;
            m.energy_j = energy.per_node_j.get(&n.id).copied().unwrap_or(0.0);
            nodes.push(m);
        }
        let metrics = Metrics {
            nodes,
            ack_transmissions: self.ack_count,
            cca_busy: self.cca_busy,
            duration_s: (end - self.data_start) as f64 / self.fs,
        };
        Ok(RunOutput { metrics, trace: self.trace })
    }
}

fn fade<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Complex64 {
    if cfg.channel.fading && !cfg.channel.ideal {
        rayleigh_gain(rng)
    } else {
        Complex64::new(1.0, 0.0)
    }
}

fn choose(model: &AtpcModel, levels: &crate::atpc::PowerVector) -> (f64, &'static str) {
    if model.a_hat > 0.0 {
        match select_power(model, levels) {
            Ok(p) => (p, "model"),
            Err(_) => (levels.max(), "zero_slope"),
        }
    } else if model.a_hat == 0.0 {
        (levels.max(), "zero_slope")
    } else {
        (levels.max(), "negative_slope")
    }
}

/// A channelized downlink reception and the search range around the frame start.
pub(crate) struct DownlinkStream {
    pub samples: Vec<Complex64>,
    pub search: (i64, i64),
}

/// What a node's receiver tuned to `dl` sees of a BS frame carrying `bits`,
/// with `offset_hz` residual carrier offset and complex gain `gain`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn downlink_stream<R: Rng + ?Sized>(
    plan: &SpectrumPlan,
    bl: usize,
    dl: SubcarrierId,
    bits: &[bool],
    symbol_rate: f64,
    offset_hz: f64,
    gain: Complex64,
    noise_var: f64,
    jammer: Option<(f64, Complex64)>,
    rng: &mut R,
) -> DownlinkStream {
    let fs = plan.sample_rate;
    let sps_wb = fs / symbol_rate;
    let margin = sps_wb.ceil() as usize + bl;
    let len = crate::phy::symbol_boundary(bits.len(), sps_wb);
    let lead = margin.div_ceil(bl) * bl;
    let n_blocks = (lead + len + margin) / bl + 1;
    let grid = BlockGrid { sample_rate: fs, block_len: bl, n_blocks, extract_hz: plan.baseband_hz(dl) };
    let em = Emission {
        bits,
        kind: ModulationKind::Ook,
        symbol_rate,
        start: lead as i64,
        freq_hz: plan.baseband_hz(dl) + offset_hz,
        gain,
    };
    let mut samples = vec![Complex64::new(0.0, 0.0); n_blocks];
    accumulate(&mut samples, &[em], &grid);
    if let Some((freq_hz, gain)) = jammer {
        let span = fs / (n_blocks * bl) as f64;
        let cw = Emission { bits: &[true], kind: ModulationKind::Ook, symbol_rate: span, start: 0, freq_hz, gain };
        accumulate(&mut samples, &[cw], &grid);
    }
    if noise_var > 0.0 {
        for s in &mut samples {
            *s += awgn(rng, noise_var);
        }
    }
    let nominal = (lead / bl) as f64;
    let sps = sps_wb / bl as f64;
    DownlinkStream { samples, search: ((nominal - sps).floor() as i64, (nominal + sps).ceil() as i64) }
}
