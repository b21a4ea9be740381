//! The named experiments.  Each one sweeps a parameter, runs the engine or a
//! link-level loop per point, and returns the rows of its plot-data files
//! together with `metrics.csv` rows, one representative trace and scalar
//! results for `summary.txt`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

use super::config::{Compensation, InterfererConfig, MobilityTrace, NodeOverride, SimConfig};
use super::engine::{downlink_stream, run, stream_rng, RunOutput};
use super::metrics::{CsvTable, MetricsTable};
use super::trace::{check_invariants, Entity, Trace, TraceEvent, Violation};
use crate::atpc::{fit_initial, select_power, update_intercept, AtpcModel, PdrSamples};
use crate::channel::{dbm_to_mw, path_loss_db, rayleigh_gain};
use crate::error::{Error, Result};
use crate::estimation::{estimate_cfo_coarse, estimate_cfo_fine, estimate_csi, measure_snr_loss, PreambleSplit};
use crate::mac::{
    downlink_failover, join, join_preamble_stream, BsState, JoinRequest, NoiseReport, JOIN_LONG_BITS, JOIN_SHORT_BITS,
};
use crate::phy::{
    ccdf_from_values, ccdf_quantile, default_grid, dofdm_encode, hpa_efficiency, BasebandSignal, ModulationKind,
    ModulationScheme, Receiver, RxConfig, SnowPacket, SpectrumPlan, SubcarrierId,
};

/// Registered scenario names, in presentation order.
pub const SCENARIOS: [&str; 9] = [
    "papr",
    "range_prr",
    "uplink_scaling",
    "downlink",
    "mobility",
    "near_far",
    "interference",
    "atpc_convergence",
    "estimator_bench",
];

const MPH: f64 = 0.447_04;

/// Everything a scenario produces.
#[derive(Debug)]
pub struct ScenarioOutput {
    pub name: &'static str,
    pub seed: u64,
    pub metrics: MetricsTable,
    /// Plot-data files, by file name.
    pub tables: Vec<(String, CsvTable)>,
    /// Scalar results in insertion order.
    pub summary: Vec<(String, f64)>,
    pub notes: Vec<String>,
    /// The trace written to `trace.log`, with the case it came from.
    pub trace: Option<(String, Trace)>,
    /// Invariant violations over every engine run of the scenario.
    pub violations: Vec<Violation>,
    pub runs: usize,
}

impl ScenarioOutput {
    fn new(name: &'static str, seed: u64) -> Self {
        Self {
            name,
            seed,
            metrics: MetricsTable::default(),
            tables: Vec::new(),
            summary: Vec::new(),
            notes: Vec::new(),
            trace: None,
            violations: Vec::new(),
            runs: 0,
        }
    }

    /// Looks up a summary value.
    pub fn value(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn table(&self, file: &str) -> Option<&CsvTable> {
        self.tables.iter().find(|(f, _)| f == file).map(|(_, t)| t)
    }

    fn put(&mut self, key: impl Into<String>, value: f64) {
        self.summary.push((key.into(), value));
    }

    fn run(&mut self, case: &str, cfg: &SimConfig) -> Result<RunOutput> {
        let out = run(cfg)?;
        self.metrics.add(self.name, case, &out.metrics);
        self.violations.extend(check_invariants(&out.trace, &cfg.spectrum));
        self.runs += 1;
        Ok(out)
    }

    fn keep_trace(&mut self, case: &str, trace: Trace) {
        self.trace = Some((case.to_string(), trace));
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario = {}", self.name);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "engine_runs = {}", self.runs);
        let _ = writeln!(s, "invariant_violations = {}", self.violations.len());
        for (k, v) in &self.summary {
            let _ = writeln!(s, "{k} = {}", fmt_value(*v));
        }
        for n in &self.notes {
            let _ = writeln!(s, "# {n}");
        }
        for v in self.violations.iter().take(20) {
            let _ = writeln!(s, "# violation t={} {}: {}", v.time, v.rule, v.detail);
        }
        s
    }

    /// `(file name, contents)` for every output file.
    pub fn files(&self) -> Result<Vec<(String, String)>> {
        let mut out = vec![("metrics.csv".to_string(), self.metrics.to_csv()?)];
        let trace = match &self.trace {
            Some((case, t)) => format!("# case: {case}\n{}", t.to_log()),
            None => "# no network run in this scenario\ntime_us,entity,event,subcarrier,detail\n".to_string(),
        };
        out.push(("trace.log".into(), trace));
        out.push(("summary.txt".into(), self.summary_text()));
        for (name, t) in &self.tables {
            out.push((name.clone(), t.to_csv()?));
        }
        Ok(out)
    }
}

fn fmt_value(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v:.6}")
    }
}

fn f(v: f64, prec: usize) -> String {
    format!("{v:.prec$}")
}

/// Runs the scenario `name` on top of `cfg`.
pub fn run_scenario(name: &str, cfg: &SimConfig) -> Result<ScenarioOutput> {
    cfg.validate()?;
    match name {
        "papr" => papr(cfg),
        "range_prr" => range_prr(cfg),
        "uplink_scaling" => uplink_scaling(cfg),
        "downlink" => downlink(cfg),
        "mobility" => mobility(cfg),
        "near_far" => near_far(cfg),
        "interference" => interference(cfg),
        "atpc_convergence" => atpc_convergence(cfg),
        "estimator_bench" => estimator_bench(cfg),
        other => Err(Error::UnknownScenario(other.to_string())),
    }
}

fn with_comp(cfg: &SimConfig, c: Compensation) -> SimConfig {
    let mut c2 = cfg.clone();
    c2.compensation = c;
    c2
}

const CSI_CFO: Compensation = Compensation { csi: true, cfo: true, atpc: false };

fn papr(cfg: &SimConfig) -> Result<ScenarioOutput> {
    let p = &cfg.scenario;
    let mut out = ScenarioOutput::new("papr", cfg.seed);
    let n = p.papr_subcarriers;
    let plan = SpectrumPlan::dense(n, 1.0)?;
    let mut rng = stream_rng(cfg.seed, 10);
    let mut real = Vec::with_capacity(p.papr_frames);
    let mut complex = Vec::with_capacity(p.papr_frames);
    let chunk = 4096;
    let mut left = p.papr_frames;
    while left > 0 {
        let frames = left.min(chunk);
        left -= frames;
        let symbols: BTreeMap<SubcarrierId, BasebandSignal> = plan
            .ids()
            .map(|id| {
                let s =
                    (0..frames).map(|_| Complex64::new(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0)).collect();
                Ok((id, BasebandSignal::new(s, 1.0)?))
            })
            .collect::<Result<_>>()?;
        let x = dofdm_encode(&symbols, &plan)?;
        for block in x.samples.chunks(plan.fft_size()) {
            complex.push(ratio_db(block.iter().map(|v| v.norm_sqr())));
            real.push(ratio_db(block.iter().map(|v| v.re * v.re)));
        }
    }
    let grid = default_grid();
    let cr = ccdf_from_values(&real, &grid);
    let cc = ccdf_from_values(&complex, &grid);
    let mut t = CsvTable::new(&["papr_db", "ccdf_real", "ccdf_complex"]);
    for ((th, a), (_, b)) in cr.iter().zip(&cc) {
        t.row(vec![f(*th, 1), format!("{a:.6e}"), format!("{b:.6e}")]);
    }
    out.tables.push(("fig4_papr_ccdf.csv".into(), t));
    let q_real = ccdf_quantile(&real, 1e-4).unwrap_or(0.0);
    let q_complex = ccdf_quantile(&complex, 1e-4).unwrap_or(0.0);
    out.put("frames", real.len() as f64);
    out.put("subcarriers", n as f64);
    out.put("papr_db_at_1e-4", q_real);
    out.put("papr_complex_db_at_1e-4", q_complex);
    out.put("hpa_efficiency_at_14db", hpa_efficiency(14.0));
    out.put("hpa_efficiency_at_papr", hpa_efficiency(q_real));
    out.notes.push("papr_db_* is measured on the real DAC waveform Re(x); *_complex on the complex envelope".into());
    Ok(out)
}

/// 10·log10(max/mean) of a block of instantaneous powers.
fn ratio_db(powers: impl Iterator<Item = f64>) -> f64 {
    let (mut peak, mut sum, mut n) = (0.0f64, 0.0, 0usize);
    for p in powers {
        peak = peak.max(p);
        sum += p;
        n += 1;
    }
    if sum <= 0.0 {
        0.0
    } else {
        10.0 * (peak * n as f64 / sum).log10()
    }
}

fn cluster(cfg: &SimConfig, d: f64, size: usize) -> SimConfig {
    let mut c = cfg.clone();
    c.topology.node_count = size;
    c.topology.cluster_distances_m = vec![d];
    c.topology.positions_m.clear();
    c.nodes.clear();
    c.mobility.clear();
    c
}

fn range_prr(cfg: &SimConfig) -> Result<ScenarioOutput> {
    let p = &cfg.scenario;
    let mut out = ScenarioOutput::new("range_prr", cfg.seed);
    let mut t = CsvTable::new(&[
        "distance_m",
        "prr_on",
        "prr_off",
        "pdr_on",
        "pdr_off",
        "throughput_on_kbps",
        "throughput_off_kbps",
    ]);
    for &d in &p.distances_m {
        let base = cluster(cfg, d, p.cluster_size);
        let on = out.run(&format!("d={d:.0},on"), &with_comp(&base, CSI_CFO))?;
        let off = out.run(&format!("d={d:.0},off"), &with_comp(&base, Compensation::NONE))?;
        let (mon, moff) = (&on.metrics, &off.metrics);
        t.row(vec![
            f(d, 0),
            f(mon.prr(), 4),
            f(moff.prr(), 4),
            f(mon.pdr(), 4),
            f(moff.pdr(), 4),
            f(mon.throughput_bps() / 1e3, 3),
            f(moff.throughput_bps() / 1e3, 3),
        ]);
        out.put(format!("prr_on_{d:.0}m"), mon.prr());
        out.put(format!("prr_off_{d:.0}m"), moff.prr());
        out.keep_trace(&format!("d={d:.0},on"), on.trace);
    }
    out.tables.push(("fig8a_prr_vs_distance.csv".into(), t));
    out.notes.push("on = CSI and CFO compensation, off = neither; ATPC disabled in both".into());
    Ok(out)
}

const SCALING_CASES: [(&str, Compensation); 3] =
    [("none", Compensation::NONE), ("csi_cfo", CSI_CFO), ("csi_cfo_atpc", Compensation::ALL)];

fn uplink_scaling(cfg: &SimConfig) -> Result<ScenarioOutput> {
    let p = &cfg.scenario;
    let mut out = ScenarioOutput::new("uplink_scaling", cfg.seed);
    let names: Vec<&str> = SCALING_CASES.iter().map(|c| c.0).collect();
    let header = |unit: &str| -> Vec<String> {
        std::iter::once("nodes".to_string()).chain(names.iter().map(|n| format!("{n}_{unit}"))).collect()
    };
    let mk = |h: Vec<String>| CsvTable { header: h, rows: Vec::new() };
    let (mut tp, mut dl, mut en) = (mk(header("kbps")), mk(header("ms")), mk(header("uj_per_bit")));
    let mut series: BTreeMap<&str, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for &n in &p.node_counts {
        let mut c = cfg.clone();
        c.topology.node_count = n;
        let (mut r1, mut r2, mut r3) = (vec![n.to_string()], vec![n.to_string()], vec![n.to_string()]);
        for (name, comp) in SCALING_CASES {
            let case = format!("n={n},{name}");
            let o = out.run(&case, &with_comp(&c, comp))?;
            let m = &o.metrics;
            r1.push(f(m.throughput_bps() / 1e3, 3));
            r2.push(f(m.mean_delay_ms(), 3));
            r3.push(f(m.energy_per_bit_j() * 1e6, 4));
            series.entry(name).or_default().push((n as f64, m.throughput_bps(), m.mean_delay_ms()));
            if name == "csi_cfo" {
                out.keep_trace(&case, o.trace);
            }
        }
        tp.row(r1);
        dl.row(r2);
        en.row(r3);
    }
    out.tables.push(("fig14a_throughput_vs_nodes.csv".into(), tp));
    out.tables.push(("fig14b_delay_vs_nodes.csv".into(), dl));
    out.tables.push(("fig14c_energy_vs_nodes.csv".into(), en));
    for (name, s) in &series {
        let xs: Vec<f64> = s.iter().map(|v| v.0).collect();
        let ys: Vec<f64> = s.iter().map(|v| v.1).collect();
        out.put(format!("{name}_throughput_r2"), r_squared(&xs, &ys));
        let per_node: Vec<f64> = s.iter().map(|v| v.1 / v.0).collect();
        out.put(format!("{name}_per_node_kbps_min"), per_node.iter().copied().fold(f64::INFINITY, f64::min) / 1e3);
        out.put(format!("{name}_per_node_kbps_max"), per_node.iter().copied().fold(0.0, f64::max) / 1e3);
        let delays: Vec<f64> = s.iter().map(|v| v.2).filter(|d| *d > 0.0).collect();
        if !delays.is_empty() {
            let mean = delays.iter().sum::<f64>() / delays.len() as f64;
            let spread = delays.iter().map(|d| (d - mean).abs()).fold(0.0, f64::max) / mean;
            out.put(format!("{name}_delay_max_rel_dev"), spread);
        }
    }
    Ok(out)
}

/// Coefficient of determination of the least-squares line through the points.
pub fn r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 1.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    if sxx == 0.0 {
        return 0.0;
    }
    sxy * sxy / (sxx * syy)
}

/// One node's view of downlink frames on `sub`.
struct DownlinkLink<'a> {
    cfg: &'a SimConfig,
    rx_on: Receiver,
    rx_off: Receiver,
}

impl<'a> DownlinkLink<'a> {
    fn new(cfg: &'a SimConfig) -> Result<Self> {
        let plan = &cfg.spectrum;
        let scheme = ModulationScheme::new(ModulationKind::Ook, cfg.radio.downlink_symbol_rate)?;
        let on = RxConfig::new(scheme, plan.sample_rate, plan.fft_size());
        let off = RxConfig { use_csi: false, ..on };
        Ok(Self { cfg, rx_on: Receiver::new(on), rx_off: Receiver::new(off) })
    }

    fn noise_var(&self) -> f64 {
        if self.cfg.channel.ideal {
            0.0
        } else {
            dbm_to_mw(self.cfg.channel.noise_psd_dbm_hz) * self.cfg.spectrum.sample_rate
        }
    }

    fn mean_amp(&self, d: f64, sub: SubcarrierId) -> Result<f64> {
        let f = self.cfg.spectrum.center_hz(sub);
        Ok(dbm_to_mw(self.cfg.radio.bs_tx_power_dbm - path_loss_db(self.cfg.channel.pathloss, d, f)?).sqrt())
    }

    fn fade<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        if self.cfg.channel.fading && !self.cfg.channel.ideal {
            rayleigh_gain(rng)
        } else {
            Complex64::new(1.0, 0.0)
        }
    }

    /// The node's ppm error and, with `compensate`, its estimate from a join.
    fn node<R: Rng + ?Sized>(&self, d: f64, compensate: bool, rng: &mut R) -> Result<(f64, f64)> {
        let c = self.cfg;
        let ppm = if c.channel.ideal { 0.0 } else { c.channel.ppm_bound * (2.0 * rng.random::<f64>() - 1.0) };
        if !compensate {
            return Ok((ppm, 0.0));
        }
        let plan = &c.spectrum;
        let fj = plan.center_hz(plan.join_index);
        let amp = dbm_to_mw(c.radio.tx_power_dbm - path_loss_db(c.channel.pathloss, d, fj)?).sqrt();
        for _ in 0..c.mac.join_attempts.max(1) {
            let mut bs = BsState::new(plan);
            let mut req =
                JoinRequest::new(0, fj * ppm * 1e-6, self.fade(rng) * amp, self.noise_var() / plan.sample_rate);
            req.symbol_rate = c.radio.join_symbol_rate;
            req.min_snr_db = c.mac.join_min_snr_db;
            match join(&mut bs, plan, &req, rng) {
                Ok(r) => return Ok((ppm, r.estimate.map(|e| e.ppm_bs).unwrap_or(0.0))),
                Err(Error::JoinTimeout(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::JoinTimeout(0))
    }

    /// Sends `frames` random frames on `sub` to a node at `d`; returns the
    /// number decoded.
    #[allow(clippy::too_many_arguments)]
    fn trial<R: Rng + ?Sized>(
        &self,
        sub: SubcarrierId,
        d: f64,
        compensate: bool,
        frames: usize,
        jammer: Option<(SubcarrierId, f64)>,
        rng: &mut R,
    ) -> Result<usize> {
        let c = self.cfg;
        let plan = &c.spectrum;
        let f = plan.center_hz(sub);
        let mean = self.mean_amp(d, sub)?;
        let mut ok = 0;
        for _ in 0..frames {
            let (ppm, est) = self.node(d, compensate, rng)?;
            let payload: Vec<u8> = (0..c.traffic.payload_bytes).map(|_| rng.random()).collect();
            let bits = SnowPacket::new(payload.clone())?.to_bits();
            let residual = -f * ppm * 1e-6 + if compensate { f * est * 1e-6 } else { 0.0 };
            let jam = match jammer {
                Some((js, jsr_db)) => {
                    let amp = self.mean_amp(d, plan.downlink_index)? * 10f64.powf(jsr_db / 20.0);
                    let phase = Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU);
                    Some((plan.baseband_hz(js) - plan.center_hz(js) * ppm * 1e-6 + 1e3, phase * amp))
                }
                None => None,
            };
            let h = self.fade(rng) * mean;
            let stream = downlink_stream(
                plan,
                plan.fft_size(),
                sub,
                &bits,
                c.radio.downlink_symbol_rate,
                residual,
                h,
                self.noise_var(),
                jam,
                rng,
            );
            let decoded = if compensate {
                self.rx_on.receive(&stream.samples, stream.search)
            } else {
                let reference = (plan.fft_size() as f64).sqrt() * mean;
                self.rx_off.receive_with(&stream.samples, stream.search, reference)
            };
            if decoded.packet().is_some_and(|p| p.payload == payload) {
                ok += 1;
            }
        }
        Ok(ok)
    }
}

fn downlink(cfg: &SimConfig) -> Result<ScenarioOutput> {
    let p = &cfg.scenario;
    let mut out = ScenarioOutput::new("downlink", cfg.seed);
    let mut c = cfg.clone();
    if c.spectrum.backup_indices.is_empty() {
        c.spectrum.backup_indices = vec![25];
        c.spectrum.validate()?;
    }
    let link = DownlinkLink::new(&c)?;
    let plan = &c.spectrum;
    let frames = p.downlink_frames;
    let airtime =
        SnowPacket::new(vec![0; c.traffic.payload_bytes])?.to_bits().len() as f64 / c.radio.downlink_symbol_rate;
    let mut rng = stream_rng(c.seed, 20);
    let mut t = CsvTable::new(&["distance_m", "prr_on", "prr_off", "throughput_on_kbps", "throughput_off_kbps"]);
    let frame_bits = airtime * c.radio.downlink_symbol_rate;
    for &d in &p.distances_m {
        let on = link.trial(plan.downlink_index, d, true, frames, None, &mut rng)? as f64 / frames as f64;
        let off = link.trial(plan.downlink_index, d, false, frames, None, &mut rng)? as f64 / frames as f64;
        let kbps = |prr: f64| prr * frame_bits / airtime / 1e3;
        t.row(vec![f(d, 0), f(on, 4), f(off, 4), f(kbps(on), 3), f(kbps(off), 3)]);
        out.put(format!("downlink_prr_on_{d:.0}m"), on);
        out.put(format!("downlink_prr_off_{d:.0}m"), off);
    }
    out.tables.push(("downlink_throughput_vs_distance.csv".into(), t));

    let d = p.distances_m.first().copied().unwrap_or(200.0);
    let jam = Some((plan.downlink_index, p.jammer_to_signal_db));
    let mut bs = BsState::new(plan);
    let mut ft = CsvTable::new(&["phase", "subcarrier", "frames", "decoded", "prr"]);
    let jammed = link.trial(bs.downlink_index, d, true, frames, jam, &mut rng)?;
    let prr_jammed = jammed as f64 / frames as f64;
    ft.row(vec![
        "jammed".into(),
        bs.downlink_index.to_string(),
        frames.to_string(),
        jammed.to_string(),
        f(prr_jammed, 4),
    ]);
    let report = NoiseReport::new(prr_jammed);
    let next = downlink_failover(&bs, report)?;
    let mut trace = Trace::new(plan.sample_rate, 1);
    if next.downlink_index != bs.downlink_index {
        let n_ann = bs.failover_announcements as usize;
        let heard = link.trial(bs.downlink_index, d, true, n_ann, jam, &mut rng)?;
        ft.row(vec![
            "announce".into(),
            bs.downlink_index.to_string(),
            n_ann.to_string(),
            heard.to_string(),
            f(heard as f64 / n_ann.max(1) as f64, 4),
        ]);
        for k in 0..n_ann {
            let at = (k as u64 + 1) * (airtime * plan.sample_rate) as u64;
            let to = next.downlink_index;
            trace.log(at, Entity::Bs, Some(bs.downlink_index), TraceEvent::FailoverAnnounce { to });
        }
        let at = (n_ann as u64 + 1) * (airtime * plan.sample_rate) as u64;
        let (from, to) = (bs.downlink_index, next.downlink_index);
        trace.log(at, Entity::Bs, Some(to), TraceEvent::FailoverSwitch { from, to });
        bs = next;
    }
    let backup = link.trial(bs.downlink_index, d, true, frames, jam, &mut rng)?;
    let prr_backup = backup as f64 / frames as f64;
    ft.row(vec![
        "backup".into(),
        bs.downlink_index.to_string(),
        frames.to_string(),
        backup.to_string(),
        f(prr_backup, 4),
    ]);
    trace.finish();
    out.tables.push(("downlink_failover.csv".into(), ft));
    out.put("failover_distance_m", d);
    out.put("failover_prr_jammed", prr_jammed);
    out.put("failover_switched", if bs.retired.is_empty() { 0.0 } else { 1.0 });
    out.put("failover_subcarrier", bs.downlink_index as f64);
    out.put("failover_prr_backup", prr_backup);
    out.keep_trace("failover", trace);
    out.notes.push("link-level downlink frames; off = no CFO correction, no CSI and no receiver AFC".into());
    Ok(out)
}

fn mobility(cfg: &SimConfig) -> Result<ScenarioOutput> {
    let p = &cfg.scenario;
    let mut out = ScenarioOutput::new("mobility", cfg.seed);
    let k = p.mobile_node;
    if k >= cfg.topology.node_count {
        return Err(Error::Config(format!("mobile_node {k} outside the topology")));
    }
    let heading = {
        let pos = cfg.position(k);
        pos[1].atan2(pos[0])
    };
    let cols = ["speed_mph", "payload_bytes", "on", "off"];
    let named = |unit: &str| -> CsvTable {
        CsvTable {
            header: cols.iter().map(|c| if c.len() <= 3 { format!("{c}_{unit}") } else { c.to_string() }).collect(),
            rows: Vec::new(),
        }
    };
    let (mut tp, mut en, mut dl) = (named("kbps"), named("uj_per_bit"), named("ms"));
    for &mph in &p.speeds_mph {
        for &bytes in &p.payloads_bytes {
            let mut c = cfg.clone();
            c.traffic.payload_bytes = bytes;
            c.mobility = vec![MobilityTrace { node: k, speed_mps: mph * MPH, heading_rad: heading }];
            c.nodes = (0..c.topology.node_count)
                .filter(|&i| i != k)
                .map(|i| NodeOverride { node: i, background: true, ..cfg.node_override(i) })
                .collect();
            let mut row = [Vec::new(), Vec::new(), Vec::new()];
            for (label, comp) in [("on", CSI_CFO), ("off", Compensation::NONE)] {
                let case = format!("mph={mph},bytes={bytes},{label}");
                let o = out.run(&case, &with_comp(&c, comp))?;
                let m = o.metrics.node(k).cloned().unwrap_or_default();
                row[0].push(f(m.throughput_bps() / 1e3, 3));
                row[1].push(f(m.energy_per_bit_j() * 1e6, 4));
                row[2].push(f(m.mean_delay_ms(), 3));
                out.put(format!("throughput_{label}_{mph}mph_{bytes}b_kbps"), m.throughput_bps() / 1e3);
                if out.trace.is_none() {
                    out.keep_trace(&case, o.trace);
                }
            }
            for (t, r) in [(&mut tp, &row[0]), (&mut en, &row[1]), (&mut dl, &row[2])] {
                let mut v = vec![f(mph, 1), bytes.to_string()];
                v.extend(r.iter().cloned());
                t.row(v);
            }
        }
    }
    out.tables.push(("fig12a_mobility_throughput.csv".into(), tp));
    out.tables.push(("fig12b_mobility_energy.csv".into(), en));
    out.tables.push(("fig13a_mobility_delay.csv".into(), dl));
    out.notes.push(format!("node {k} moves radially; every other node transmits in the background"));
    Ok(out)
}

fn near_far_config(cfg: &SimConfig, middle_power: f64, atpc: bool) -> SimConfig {
    let p = &cfg.scenario;
    let mut c = cfg.clone();
    c.topology.node_count = 3;
    c.topology.positions_m = vec![[p.near_distance_m, 0.0], [p.middle_distance_m, 0.0], [0.0, p.near_distance_m]];
    c.mobility.clear();
    c.compensation = Compensation { atpc, ..CSI_CFO };
    let near = |node| NodeOverride {
        node,
        tx_power_dbm: Some(p.near_power_dbm),
        atpc: Some(false),
        interval_ms: Some(p.near_interval_ms),
        background: true,
    };
    c.nodes = vec![
        near(0),
        NodeOverride { node: 1, tx_power_dbm: Some(middle_power), atpc: Some(atpc), ..Default::default() },
        near(2),
    ];
    c
}

fn near_far(cfg: &SimConfig) -> Result<ScenarioOutput> {
    let p = &cfg.scenario;
    let mut out = ScenarioOutput::new("near_far", cfg.seed);
    let thr = cfg.atpc.pdr_threshold;
    let mut sweep = CsvTable::new(&["tx_power_dbm", "pdr_middle", "prr_middle", "pdr_near"]);
    for &tp in &p.sweep_powers_dbm {
        let o = out.run(&format!("fixed={tp}"), &near_far_config(cfg, tp, false))?;
        let m = &o.metrics;
        let mid = m.node(1).cloned().unwrap_or_default();
        let near = (m.node(0).map(|n| n.pdr()).unwrap_or(0.0) + m.node(2).map(|n| n.pdr()).unwrap_or(0.0)) / 2.0;
        sweep.row(vec![f(tp, 1), f(mid.pdr(), 4), f(mid.prr(), 4), f(near, 4)]);
        out.put(format!("pdr_fixed_{tp}dbm"), mid.pdr());
    }
    out.tables.push(("fig11_pdr_vs_txpower.csv".into(), sweep));

    let start = p.middle_start_power_dbm;
    let fixed = out.run("before", &near_far_config(cfg, start, false))?;
    let before = fixed.metrics.node(1).cloned().unwrap_or_default();
    let adaptive = out.run("atpc", &near_far_config(cfg, start, true))?;
    let tr = &adaptive.trace;
    let fit_at = tr
        .records
        .iter()
        .find(|r| r.entity == Entity::Node(1) && matches!(r.event, TraceEvent::AtpcFit { .. }))
        .map(|r| r.time);
    let final_power = tr
        .records
        .iter()
        .rev()
        .filter(|r| r.entity == Entity::Node(1))
        .find_map(|r| match r.event {
            TraceEvent::AtpcSelect { power_dbm, .. } => Some(power_dbm),
            _ => None,
        })
        .unwrap_or(start);
    let (sent, acked) = match fit_at {
        Some(t0) => count_after(tr, 1, t0),
        None => {
            let m = adaptive.metrics.node(1).cloned().unwrap_or_default();
            (m.sent, m.acked)
        }
    };
    let after = if sent == 0 { 0.0 } else { acked as f64 / sent as f64 };
    let mut t = CsvTable::new(&["phase", "tx_power_dbm", "sent", "acked", "pdr"]);
    t.row(vec!["fixed".into(), f(start, 1), before.sent.to_string(), before.acked.to_string(), f(before.pdr(), 4)]);
    t.row(vec!["atpc".into(), f(final_power, 1), sent.to_string(), acked.to_string(), f(after, 4)]);
    out.tables.push(("near_far_atpc.csv".into(), t));
    out.put("pdr_threshold", thr);
    out.put("pdr_before", before.pdr());
    out.put("pdr_after_atpc", after);
    out.put("atpc_engaged", if fit_at.is_some() { 1.0 } else { 0.0 });
    out.put("atpc_final_power_dbm", final_power);
    out.keep_trace("atpc", adaptive.trace);
    out.notes.push("pdr_after_atpc counts data transmissions of the middle node after its initial fit".into());
    Ok(out)
}

/// Non-probe transmissions and ACKs of `node` at or after `t0`.
fn count_after(trace: &Trace, node: usize, t0: u64) -> (u64, u64) {
    let (mut sent, mut acked) = (0, 0);
    for r in trace.records.iter().filter(|r| r.time >= t0 && r.entity == Entity::Node(node)) {
        match r.event {
            TraceEvent::TxStart { probe: false, .. } => sent += 1,
            TraceEvent::AckRx { .. } => acked += 1,
            _ => {}
        }
    }
    (sent, acked.min(sent))
}

fn interference(cfg: &SimConfig) -> Result<ScenarioOutput> {
    let p = &cfg.scenario;
    let mut out = ScenarioOutput::new("interference", cfg.seed);
    let base = with_comp(cfg, CSI_CFO);
    let mut none = base.clone();
    none.interferer = None;
    let baseline = out.run("baseline", &none)?;
    out.put("prr_baseline", baseline.metrics.prr());
    let icfg = cfg.interferer.unwrap_or_default();
    let mut t = CsvTable::new(&["overlap", "prr", "pdr", "throughput_kbps", "cca_busy"]);
    t.row(vec![
        "none".into(),
        f(baseline.metrics.prr(), 4),
        f(baseline.metrics.pdr(), 4),
        f(baseline.metrics.throughput_bps() / 1e3, 3),
        baseline.metrics.cca_busy.to_string(),
    ]);
    for &rho in &p.overlaps {
        let mut c = base.clone();
        c.interferer = Some(InterfererConfig { overlap_fraction: rho, ..icfg });
        let case = format!("overlap={rho}");
        let o = out.run(&case, &c)?;
        let m = &o.metrics;
        t.row(vec![f(rho, 2), f(m.prr(), 4), f(m.pdr(), 4), f(m.throughput_bps() / 1e3, 3), m.cca_busy.to_string()]);
        out.put(format!("prr_overlap_{rho}"), m.prr());
        out.keep_trace(&case, o.trace);
    }
    out.tables.push(("interference_prr_vs_overlap.csv".into(), t));
    Ok(out)
}

/// Closed-loop ATPC on a synthetic link whose PDR is exactly linear in power,
/// with binomial packet outcomes.  The initial fit sees intercept
/// `intercept`; from then on the link runs at `intercept - shift`.
pub fn atpc_closed_loop<R: Rng + ?Sized>(
    cfg: &SimConfig,
    slope: f64,
    intercept: f64,
    shift: f64,
    iterations: usize,
    rng: &mut R,
) -> Result<Vec<AtpcStep>> {
    let a = &cfg.atpc;
    let line = |b: f64, tp: f64| (slope * tp + b).clamp(0.0, 1.0);
    let truth = |tp: f64| line(intercept - shift, tp);
    let mut draw = |b: f64, tp: f64, n: usize| -> Result<f64> {
        let d = Binomial::new(n as u64, line(b, tp)).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(d.sample(rng) as f64 / n as f64)
    };
    let mut pairs = Vec::new();
    for &tp in a.levels.levels() {
        pairs.push((tp, draw(intercept, tp, a.probe_packets)?));
    }
    let mut model = fit_initial(&PdrSamples::new(pairs)?, a.pdr_threshold)?;
    let mut tp = choose_power(&model, cfg);
    let mut steps =
        vec![AtpcStep { iteration: 0, tx_power_dbm: tp, pdr_true: truth(tp), pdr_measured: f64::NAN, model }];
    for it in 1..=iterations {
        let readings = (0..a.readings_per_period)
            .map(|_| Ok((tp, draw(intercept - shift, tp, a.packets_per_reading)?)))
            .collect::<Result<Vec<_>>>()?;
        let samples = PdrSamples::new(readings)?;
        let measured = samples.mean_pdr().unwrap_or(0.0);
        model = update_intercept(&model, &samples)?;
        tp = choose_power(&model, cfg);
        steps.push(AtpcStep { iteration: it, tx_power_dbm: tp, pdr_true: truth(tp), pdr_measured: measured, model });
    }
    Ok(steps)
}

fn choose_power(model: &AtpcModel, cfg: &SimConfig) -> f64 {
    if model.a_hat > 0.0 {
        select_power(model, &cfg.atpc.levels).unwrap_or(cfg.atpc.levels.max())
    } else {
        cfg.atpc.levels.max()
    }
}

/// One feedback period of [`atpc_closed_loop`]; iteration 0 is the initial fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtpcStep {
    pub iteration: usize,
    pub tx_power_dbm: f64,
    pub pdr_true: f64,
    /// Mean PDR reported in the period that led to this step.
    pub pdr_measured: f64,
    pub model: AtpcModel,
}

fn atpc_convergence(cfg: &SimConfig) -> Result<ScenarioOutput> {
    let p = &cfg.scenario;
    let mut out = ScenarioOutput::new("atpc_convergence", cfg.seed);
    let mut rng = stream_rng(cfg.seed, 30);
    let [slope, intercept] = p.atpc_link;
    let steps = atpc_closed_loop(cfg, slope, intercept, p.atpc_link_shift, p.atpc_iterations, &mut rng)?;
    let thr = cfg.atpc.pdr_threshold;
    let mut t = CsvTable::new(&["iteration", "tx_power_dbm", "pdr_true", "pdr_measured", "a_hat", "b_hat"]);
    for s in &steps {
        let measured = if s.pdr_measured.is_nan() { String::new() } else { f(s.pdr_measured, 4) };
        t.row(vec![
            s.iteration.to_string(),
            f(s.tx_power_dbm, 1),
            f(s.pdr_true, 4),
            measured,
            f(s.model.a_hat, 6),
            f(s.model.b_hat, 6),
        ]);
    }
    out.tables.push(("atpc_convergence.csv".into(), t));
    let in_band = |s: &AtpcStep| (s.pdr_true - thr).abs() <= 0.05 + 1e-9;
    let converged = steps.iter().position(in_band);
    let held = converged.map(|k| {
        let rest = &steps[k..];
        rest.iter().filter(|s| in_band(s)).count() as f64 / rest.len() as f64
    });
    out.put("slope_true", slope);
    out.put("intercept_true", intercept);
    out.put("intercept_shift", p.atpc_link_shift);
    out.put("a_hat_initial", steps[0].model.a_hat);
    out.put("iterations_to_converge", converged.map(|i| i as f64).unwrap_or(f64::INFINITY));
    out.put("in_band_fraction_after", held.unwrap_or(0.0));
    out.put("final_power_dbm", steps.last().map(|s| s.tx_power_dbm).unwrap_or(0.0));
    out.notes.push("the link intercept drops by intercept_shift after the initial fit; convergence is the first period within ±0.05 of the threshold".into());
    Ok(out)
}

/// RMS coarse and fine CFO errors (Hz) over `trials` join preambles with the
/// given offset and SNR per "on" stream sample; `None` SNR means noiseless.
pub fn cfo_errors<R: Rng + ?Sized>(
    plan: &SpectrumPlan,
    offset_hz: f64,
    snr_db: Option<f64>,
    trials: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let fs = plan.sample_rate;
    let b = crate::mac::JOIN_BLOCK_LEN as f64;
    let psd = match snr_db {
        Some(s) => b / 10f64.powf(s / 10.0) / fs,
        None => 0.0,
    };
    let (mut ec, mut ef) = (0.0, 0.0);
    for _ in 0..trials {
        let phase = Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU);
        let req = JoinRequest::new(0, offset_hz, phase, psd);
        let stream = join_preamble_stream(plan, &req, rng)?;
        let spb = (stream.sample_rate / req.symbol_rate).round() as usize;
        let split = PreambleSplit::from_signal(&stream, JOIN_SHORT_BITS * spb, JOIN_LONG_BITS * spb)?;
        let (coarse, fine) = match estimate_cfo_coarse(&split) {
            Ok(c) => (c, estimate_cfo_fine(&split, c).unwrap_or(c)),
            Err(Error::Ambiguous { estimate_hz, .. }) => (estimate_hz, estimate_hz),
            Err(e) => return Err(e),
        };
        ec += (coarse - offset_hz).powi(2);
        ef += (fine - offset_hz).powi(2);
    }
    let n = trials.max(1) as f64;
    Ok(((ec / n).sqrt(), (ef / n).sqrt()))
}

/// RMS error |Ĥ − H| of the LS estimate on a random BPSK preamble at the
/// given per-sample SNR, with E|H|² = 1.
pub fn csi_error<R: Rng + ?Sized>(snr_db: f64, len: usize, parts: usize, trials: usize, rng: &mut R) -> Result<f64> {
    let sigma = (10f64.powf(-snr_db / 10.0) / 2.0).sqrt();
    let mut acc = 0.0;
    for _ in 0..trials {
        let h = rayleigh_gain(rng);
        let p: Vec<Complex64> =
            (0..len).map(|_| Complex64::new(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0)).collect();
        let y: Vec<Complex64> = p
            .iter()
            .map(|x| h * x + Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * sigma)
            .collect();
        let est = estimate_csi(&y, &p, parts)?;
        acc += (est.h_gain - h).norm_sqr();
    }
    Ok((acc / trials.max(1) as f64).sqrt())
}

fn estimator_bench(cfg: &SimConfig) -> Result<ScenarioOutput> {
    let p = &cfg.scenario;
    let mut out = ScenarioOutput::new("estimator_bench", cfg.seed);
    let plan = &cfg.spectrum;
    let f_join = plan.center_hz(plan.join_index);
    let mut rng = stream_rng(cfg.seed, 40);
    let trials = p.estimator_trials;

    let mut noiseless_rel: f64 = 0.0;
    for &ppm in &p.cfo_ppms {
        for sign in [-1.0, 1.0] {
            let off = sign * ppm * 505e6 * 1e-6;
            let (_, fine) = cfo_errors(plan, off, None, 4, &mut rng)?;
            noiseless_rel = noiseless_rel.max(fine / off.abs());
        }
    }
    out.put("cfo_noiseless_max_rel_error", noiseless_rel);

    let mut t = CsvTable::new(&["snr_db", "ppm", "offset_hz", "coarse_rms_hz", "fine_rms_hz", "fine_rms_rel"]);
    let mut fine_le_coarse = true;
    for &snr in &p.snrs_db {
        let mut worst_rel: f64 = 0.0;
        for &ppm in &p.cfo_ppms {
            let off = ppm * 505e6 * 1e-6;
            let (c, fi) = cfo_errors(plan, off, Some(snr), trials, &mut rng)?;
            fine_le_coarse &= fi <= c;
            worst_rel = worst_rel.max(fi / off);
            t.row(vec![f(snr, 1), f(ppm, 1), f(off, 1), f(c, 3), f(fi, 3), format!("{:.6}", fi / off)]);
        }
        out.put(format!("cfo_fine_rms_rel_{snr}db"), worst_rel);
    }
    out.put("cfo_fine_le_coarse", if fine_le_coarse { 1.0 } else { 0.0 });
    out.put("join_center_hz", f_join);
    out.tables.push(("cfo_rms_vs_snr.csv".into(), t));

    let mut ct = CsvTable::new(&["snr_db", "csi_rms_error"]);
    for &snr in &p.snrs_db {
        let e = csi_error(snr, 64, 4, trials, &mut rng)?;
        ct.row(vec![f(snr, 1), format!("{e:.6}")]);
    }
    out.tables.push(("csi_error_vs_snr.csv".into(), ct));

    let es_n0 = 10f64.powf(p.snr_loss_es_n0_db / 10.0);
    let period = 1e-3;
    let mut st = CsvTable::new(&["pi_df_t", "delta_f_hz", "es_n0_db", "measured", "closed_form", "rel_error"]);
    let mut worst: f64 = 0.0;
    for &x in &p.snr_loss_points {
        let df = x / (std::f64::consts::PI * period);
        let m = measure_snr_loss(df, period, es_n0, 64, trials, &mut rng)?;
        let rel = (m.measured - m.closed_form).abs() / m.closed_form;
        worst = worst.max(rel);
        st.row(vec![
            f(x, 3),
            f(df, 3),
            f(p.snr_loss_es_n0_db, 1),
            format!("{:.6}", m.measured),
            format!("{:.6}", m.closed_form),
            format!("{rel:.6}"),
        ]);
    }
    out.put("snr_loss_max_rel_error", worst);
    out.tables.push(("snr_loss.csv".into(), st));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_squared_of_a_line_is_one() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 1.0).collect();
        assert!((r_squared(&xs, &ys) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_name() {
        let e = run_scenario("nope", &SimConfig::default()).unwrap_err();
        assert_eq!(e, Error::UnknownScenario("nope".into()));
    }

    #[test]
    fn noiseless_cfo_is_exact() {
        let plan = SpectrumPlan::default();
        let mut rng = stream_rng(3, 0);
        let (_, fine) = cfo_errors(&plan, 7_777.0, None, 2, &mut rng).unwrap();
        assert!(fine / 7_777.0 < 1e-6);
    }
}
