use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use duelkit_bench::{dtlz2, single_run};
use duelkit_core::engine::Algorithm;
use duelkit_core::harness::{simulate, Benchmark};
use duelkit_core::problems::DtlzParams;

/// 500 simulated rounds on a 100-point DTLZ2 sample, per algorithm.
fn rounds(c: &mut Criterion) {
    let instance = dtlz2(100);
    let benchmark = Benchmark::Dtlz2 { params: DtlzParams { n: 100, seed: 7, ..Default::default() } };
    let mut group = c.benchmark_group("simulate_500_rounds");
    group.sample_size(10);
    for algo in Algorithm::ALL {
        let config = single_run(benchmark.clone(), algo, 500);
        group.bench_with_input(BenchmarkId::from_parameter(algo.as_str()), &config, |b, config| {
            b.iter(|| simulate(&instance, config, algo, 1).expect("simulation"))
        });
    }
    group.finish();
}

criterion_group!(benches, rounds);
criterion_main!(benches);
