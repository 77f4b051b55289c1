use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use smoothlmc::potentials::{builtin, Params};
use smoothlmc::samplers::{run_replicas, ChainConfig, Execution, GradientOracle};

fn replicas(c: &mut Criterion) {
    let pot = builtin("hoelder_mix", 4, &Params::new()).unwrap();
    let oracle = GradientOracle::smoothed(pot, 0.1, 4).unwrap();
    let cfg = ChainConfig::new(1.0, 1e-3, 2_000, 7).with_thin(10);
    let mut group = c.benchmark_group("ss_lmc_replicas");
    group.sample_size(10);
    for n in [4usize, 16] {
        for (label, exec) in [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)] {
            group.bench_with_input(BenchmarkId::new(label, n), &n, |b, &n| {
                b.iter(|| black_box(run_replicas(&oracle, &cfg, n, exec).unwrap()))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, replicas);
criterion_main!(benches);
