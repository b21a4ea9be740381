use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use snow_bench::{bpsk_blocks, packet, rng, wideband_mix};
use snow_core::phy::{
    compute_papr, demodulate, dofdm_decode, dofdm_encode, modulate, ModulationScheme, Receiver, RxConfig,
};

fn framing(c: &mut Criterion) {
    let mut r = rng(1);
    let p = packet(30, &mut r);
    let bits = p.to_bits();
    c.bench_function("packet_to_bits_30b", |b| b.iter(|| p.to_bits()));
    c.bench_function("packet_from_bits_30b", |b| b.iter(|| snow_core::SnowPacket::from_bits(&bits)));
}

fn modem(c: &mut Criterion) {
    let mut r = rng(2);
    let bits = packet(30, &mut r).to_bits();
    let scheme = ModulationScheme::uplink_default();
    let fs = 112e3;
    c.bench_function("modulate_ook_30b", |b| b.iter(|| modulate(&bits, scheme, 0.0, 20e3, fs).unwrap()));
    let sig = modulate(&bits, scheme, 0.0, 20e3, fs).unwrap();
    c.bench_function("demodulate_ook_30b", |b| b.iter(|| demodulate(&sig, scheme, None).unwrap()));
}

fn dofdm(c: &mut Criterion) {
    let mut r = rng(3);
    let (plan, blocks) = bpsk_blocks(64, &mut r);
    c.bench_function("dofdm_encode_64", |b| b.iter(|| dofdm_encode(&blocks, &plan).unwrap()));
    let x = dofdm_encode(&blocks, &plan).unwrap();
    c.bench_function("papr_64", |b| b.iter(|| compute_papr(&x).unwrap()));

    let (plan, wide) = wideband_mix(&mut r);
    c.bench_function("dofdm_decode_25_streams", |b| b.iter(|| dofdm_decode(&wide, &plan).unwrap()));
    let streams = dofdm_decode(&wide, &plan).unwrap();
    let rx = Receiver::new(RxConfig::new(ModulationScheme::uplink_default(), plan.sample_rate, plan.fft_size()));
    let id = plan.data_subcarriers()[12];
    c.bench_function("receive_one_stream", |b| {
        b.iter_batched(|| streams[&id].samples.clone(), |s| rx.receive(&s, (0, 110)), BatchSize::SmallInput)
    });
}

criterion_group!(benches, framing, modem, dofdm);
criterion_main!(benches);
