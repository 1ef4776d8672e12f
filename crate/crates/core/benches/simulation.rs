use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use robust_dpd::sim::{empirical_size_power_with, Execution, SimConfig, SimMode};

fn config(reps: usize) -> SimConfig {
    let mut cfg = SimConfig::new(50);
    cfg.reps = reps;
    cfg.e_err = vec![0.0, 0.1];
    cfg.mode = vec![SimMode::Size];
    cfg.master_seed = 11;
    cfg
}

fn execution(c: &mut Criterion) {
    let mut group = c.benchmark_group("empirical_size_power");
    group.sample_size(10);
    for reps in [20, 80] {
        let cfg = config(reps);
        for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(name, reps), &cfg, |b, cfg| {
                b.iter(|| empirical_size_power_with(black_box(cfg), exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, execution);
criterion_main!(benches);
