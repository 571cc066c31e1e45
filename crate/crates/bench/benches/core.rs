use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rumour_bench::{constants, SIZES};
use rumour_core::automata::AutomataTable;
use rumour_core::simulator::sample_batch;
use rumour_core::{DistBackend, ExactEngine, SimConfig, TailSide};

fn dj_table(c: &mut Criterion) {
    let k = constants();
    let mut g = c.benchmark_group("dj_table");
    g.sample_size(10);
    for j in [100usize, 500, 1000] {
        g.bench_with_input(BenchmarkId::from_parameter(j), &j, |b, &j| {
            b.iter(|| AutomataTable::compute_exact(black_box(j), &k).unwrap())
        });
    }
    g.finish();
}

fn distributions(c: &mut Criterion) {
    let engine = ExactEngine::default();
    // warm the shared d_j table so only the pmf evaluation is timed
    engine.table(SIZES[2] as usize).unwrap();
    let mut g = c.benchmark_group("distribution");
    g.sample_size(10);
    g.bench_function("rational/100", |b| b.iter(|| engine.distribution(black_box(100), DistBackend::Rational).unwrap()));
    for n in SIZES {
        g.bench_with_input(BenchmarkId::new("float_formula", n), &n, |b, &n| {
            b.iter(|| engine.distribution(n, DistBackend::FloatFormula).unwrap())
        });
    }
    g.bench_function("dp_oracle/1000", |b| b.iter(|| engine.distribution(black_box(1000), DistBackend::DpOracle).unwrap()));
    g.bench_function("asymptotic_tail/1e8", |b| {
        b.iter(|| engine.tail_estimate(black_box(100_000_000), 1.0, 2.07, TailSide::Both, DistBackend::AsymptoticD).unwrap())
    });
    g.finish();
}

fn sampling(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    for n in SIZES {
        let config = SimConfig::new(n, 1).with_streams(4);
        g.bench_with_input(BenchmarkId::new("batch_1000", n), &config, |b, config| {
            b.iter(|| sample_batch(config, 1000).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, dj_table, distributions, sampling);
criterion_main!(benches);
