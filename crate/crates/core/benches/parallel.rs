//! Sequential versus rayon execution of the data-parallel kernels.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use qrng_core::analysis::{tally, BitStream};
use qrng_core::device::tally_segments;
use qrng_core::par::Execution;
use qrng_core::postproc::montecarlo::flip_hold_monte_carlo;
use qrng_core::postproc::TransitionRule;
use qrng_core::validation::ideal_device;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn bit_tally(c: &mut Criterion) {
    let bytes: Vec<u8> = (0..1u64 << 24)
        .map(|i| (i.wrapping_mul(0x9e37_79b9_7f4a_7c15) >> 56) as u8)
        .collect();
    let stream = BitStream::from_bytes(bytes, 1 << 27).unwrap();
    let mut g = c.benchmark_group("bit_tally");
    g.throughput(Throughput::Elements(stream.len()));
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, "2^27 bits"), |b| {
            b.iter(|| black_box(tally(&stream, exec, 1 << 16)))
        });
    }
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let cycles = 1u64 << 22;
    let mut g = c.benchmark_group("flip_hold_monte_carlo");
    g.throughput(Throughput::Elements(cycles));
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, "2^22 cycles"), |b| {
            b.iter(|| {
                black_box(flip_hold_monte_carlo(
                    0.30,
                    0.25,
                    cycles,
                    32,
                    7,
                    TransitionRule::default(),
                    exec,
                ))
            })
        });
    }
    g.finish();
}

fn device_segments(c: &mut Criterion) {
    let cfg = ideal_device();
    let bits = 1u64 << 20;
    let mut g = c.benchmark_group("device_segments");
    g.sample_size(10);
    g.throughput(Throughput::Elements(bits));
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, "2^20 bits"), |b| {
            b.iter(|| black_box(tally_segments(&cfg, 11, bits, 16, exec).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bit_tally, monte_carlo, device_segments);
criterion_main!(benches);
