use criterion::{criterion_group, criterion_main, Criterion};
use snow_bench::{rng, small_network};
use snow_core::atpc::{fit_initial, select_power};
use snow_core::sim::{csi_error, run};
use snow_core::{PdrSamples, PowerVector};

fn atpc(c: &mut Criterion) {
    let pairs: Vec<(f64, f64)> = (0..16).map(|t| (t as f64, 0.3 + 0.04 * t as f64)).collect();
    let samples = PdrSamples::new(pairs).unwrap();
    let levels = PowerVector::default();
    c.bench_function("atpc_fit_and_select", |b| {
        b.iter(|| select_power(&fit_initial(&samples, 0.9).unwrap(), &levels).unwrap())
    });
}

fn estimation(c: &mut Criterion) {
    let mut r = rng(4);
    c.bench_function("csi_error_100_trials", |b| b.iter(|| csi_error(10.0, 64, 4, 100, &mut r).unwrap()));
}

fn network(c: &mut Criterion) {
    let mut g = c.benchmark_group("engine");
    g.sample_size(10);
    let cfg = small_network(5, 5);
    g.bench_function("run_5_nodes_5_packets", |b| b.iter(|| run(&cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, atpc, estimation, network);
criterion_main!(benches);
