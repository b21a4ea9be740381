//! Shared fixtures for the benchmarks.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snow_core::phy::{modulate, BasebandSignal, ModulationScheme, SnowPacket, SpectrumPlan, SubcarrierId};
use snow_core::SimConfig;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn packet(bytes: usize, rng: &mut ChaCha8Rng) -> SnowPacket {
    SnowPacket::new((0..bytes).map(|_| rng.random()).collect()).expect("payload fits")
}

/// One random BPSK block per subcarrier of a dense `n`-subcarrier plan.
pub fn bpsk_blocks(n: u16, rng: &mut ChaCha8Rng) -> (SpectrumPlan, BTreeMap<SubcarrierId, BasebandSignal>) {
    let plan = SpectrumPlan::dense(n, 125e3).expect("valid plan");
    let fs = plan.sample_rate / plan.fft_size() as f64;
    let blocks = plan
        .ids()
        .map(|id| {
            let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
            (id, BasebandSignal::new(vec![Complex64::new(s, 0.0)], fs).expect("non-empty"))
        })
        .collect();
    (plan, blocks)
}

/// Every data subcarrier of the default plan carrying a 30-byte packet,
/// summed at the wideband rate with random start offsets.
pub fn wideband_mix(rng: &mut ChaCha8Rng) -> (SpectrumPlan, BasebandSignal) {
    let plan = SpectrumPlan::default();
    let fs = plan.sample_rate;
    let bl = plan.fft_size();
    let scheme = ModulationScheme::uplink_default();
    let tones: Vec<(usize, BasebandSignal)> = plan
        .data_subcarriers()
        .into_iter()
        .map(|id| {
            let bits = packet(30, rng).to_bits();
            let tone =
                modulate(&bits, scheme, plan.baseband_hz(id), plan.subcarrier_bandwidth, fs).expect("no aliasing");
            (rng.random_range(0..4_000), tone)
        })
        .collect();
    let len = tones.iter().map(|(s, t)| s + t.samples.len()).max().unwrap_or(0).div_ceil(bl) * bl;
    let mut wide = vec![Complex64::new(0.0, 0.0); len];
    for (start, tone) in &tones {
        for (i, v) in tone.samples.iter().enumerate() {
            wide[start + i] += v;
        }
    }
    (plan, BasebandSignal::new(wide, fs).expect("non-empty"))
}

/// A short network run: `nodes` nodes sending `packets` packets each.
pub fn small_network(nodes: usize, packets: u64) -> SimConfig {
    let mut c = SimConfig::default();
    c.topology.node_count = nodes;
    c.traffic.packets_per_node = packets;
    c
}
