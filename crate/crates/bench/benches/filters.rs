//! Steady-state cost of one filter step for each algorithm, plus the two
//! hot primitives (multinomial resampling, periodogram).

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use islandpf_bench::{warmed_grid_filter, warmed_ikf_system, warmed_island_system, BENCH_SEED};
use islandpf_core::rng::RandomStream;
use islandpf_core::{multinomial_resample, periodogram};
use std::hint::black_box;

const WARM: usize = 5;

fn bench_resampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("resampling");
    let stream = RandomStream::new(BENCH_SEED, 0);
    let mut weights = Vec::with_capacity(100_000);
    let w = stream.substream(1);
    for i in 0..100_000u64 {
        weights.push(w.substream(i).uniform());
    }
    let total: f64 = weights.iter().sum();
    for v in &mut weights {
        *v /= total;
    }
    group.throughput(Throughput::Elements(100_000));
    group.bench_function("multinomial_100k", |b| {
        b.iter_batched(
            || stream.substream(2),
            |mut s| black_box(multinomial_resample(&weights, 100_000, &mut s).unwrap()),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

fn bench_lipf_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("island_filter");
    for (n1, n2) in [(64usize, 64usize), (200, 100)] {
        let (system, traj) = warmed_island_system(n1, n2, WARM);
        group.throughput(Throughput::Elements((n1 * n2) as u64));
        group.bench_function(format!("growth_step_{n1}x{n2}"), |b| {
            b.iter_batched(
                || system.clone(),
                |mut s| {
                    let cache = s.evaluate(traj.obs(WARM)).unwrap();
                    s.step(&cache).unwrap();
                    black_box(s.step_index())
                },
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn bench_ikf_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("interacting_kalman");
    let n1 = 100usize;
    let (system, traj) = warmed_ikf_system(n1, WARM);
    group.throughput(Throughput::Elements(n1 as u64));
    group.bench_function(format!("mobile_step_{n1}"), |b| {
        b.iter_batched(
            || system.clone(),
            |mut s| {
                let cache = s.evaluate(traj.obs(WARM)).unwrap();
                s.step(&cache).unwrap();
                black_box(s.step_index())
            },
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

fn bench_grid_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("grid_oracle");
    group.sample_size(20);
    let (filter, traj) = warmed_grid_filter(400, WARM);
    group.bench_function("growth_step_400x400", |b| {
        b.iter_batched(
            || filter.clone(),
            |mut f| {
                let cache = f.evaluate(traj.obs(WARM)).unwrap();
                f.step(&cache).unwrap();
                black_box(f.predictor_joint()[0])
            },
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

fn bench_periodogram(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectral");
    let stream = RandomStream::new(BENCH_SEED, 0);
    let s = stream.substream(3);
    let signal: Vec<f64> =
        (0..4096u64).map(|i| (0.31 * i as f64).sin() + s.substream(i).normal(0.0, 1.0)).collect();
    group.throughput(Throughput::Elements(4096));
    group.bench_function("periodogram_4096", |b| b.iter(|| black_box(periodogram(&signal).unwrap())));
    group.finish();
}

criterion_group!(
    benches,
    bench_resampling,
    bench_lipf_step,
    bench_ikf_step,
    bench_grid_step,
    bench_periodogram
);
criterion_main!(benches);
