//! Fixtures shared by the benchmarks.

use duelkit_core::bounds::RelatedEvidence;
use duelkit_core::harness::{Benchmark, ExperimentConfig};
use duelkit_core::engine::Algorithm;
use duelkit_core::problems::{DtlzParams, Instance};

/// `n` related source pairs with mixed weights and counts.
pub fn evidence(n: usize) -> Vec<RelatedEvidence> {
    (0..n)
        .map(|s| {
            let count = 5 + (s as u64 * 7) % 40;
            let weight = 0.2 + 0.8 * ((s * 37) % 100) as f64 / 100.0;
            RelatedEvidence::new((s, s + 1), count / 2, count, weight).expect("valid evidence")
        })
        .collect()
}

/// DTLZ2 front sample of `n` points.
pub fn dtlz2(n: usize) -> Instance {
    Benchmark::Dtlz2 { params: DtlzParams { n, seed: 7, ..Default::default() } }.load().expect("dtlz2 instance")
}

/// One algorithm, one seed, `rounds` duels.
pub fn single_run(benchmark: Benchmark, algo: Algorithm, rounds: u64) -> ExperimentConfig {
    ExperimentConfig::new(benchmark, vec![algo], rounds, vec![1])
}
