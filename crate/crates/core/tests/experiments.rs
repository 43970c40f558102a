use std::fs;

use duelkit_core::engine::Algorithm;
use duelkit_core::harness::{
    derive_seeds, emit_plot_data, query_stats, read_run_dir, run_experiment, write_run_dir, Benchmark,
    ExperimentConfig,
};
use duelkit_core::problems::DtlzParams;

/// Needs the real rankings; the bundled sample is synthetic.
#[test]
fn sushi_augmentation_does_not_hurt() {
    let Some(rankings) = std::env::var_os("DUELKIT_SUSHI_RANKINGS") else {
        eprintln!("skipped: DUELKIT_SUSHI_RANKINGS not set");
        return;
    };
    let cfg = ExperimentConfig::new(
        Benchmark::Sushi { rankings: Some(rankings.into()) },
        vec![Algorithm::Rucb, Algorithm::IpeaRucb],
        2000,
        derive_seeds(1, 10),
    );
    let art = run_experiment(&cfg).unwrap();
    let rucb = art.summary(Algorithm::Rucb).unwrap().final_mean().unwrap();
    let ipea = art.summary(Algorithm::IpeaRucb).unwrap().final_mean().unwrap();
    assert!(ipea <= rucb, "ipea-rucb {ipea} vs rucb {rucb}");
}

#[test]
fn identical_configs_write_identical_directories() {
    let cfg = ExperimentConfig::new(
        Benchmark::Dtlz2 { params: DtlzParams { n: 15, seed: 4, ..Default::default() } },
        vec![Algorithm::Dts, Algorithm::IpeaDts],
        60,
        derive_seeds(3, 4),
    );
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_run_dir(&run_experiment(&cfg).unwrap(), a.path()).unwrap();
    write_run_dir(&run_experiment(&cfg).unwrap(), b.path()).unwrap();
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.iter().any(|n| n == "stats.json"));
    for name in &names {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name:?}");
    }
    let back = read_run_dir(a.path()).unwrap();
    assert_eq!(back.runs.len(), 8);
}

#[test]
fn contextual_runs_stay_inside_pools() {
    let cfg = ExperimentConfig::new(
        Benchmark::Contextual { rewards: None, embeddings: None, pools: 3, per_pool: 6, dim: 16, seed: 2 },
        Algorithm::ALL.to_vec(),
        90,
        derive_seeds(0, 2),
    );
    let art = run_experiment(&cfg).unwrap();
    for run in &art.runs {
        for (t, e) in run.events.iter().enumerate() {
            // Round t is served from context t mod 3; pools hold 6 candidates in order.
            assert_eq!(e.champion / 6, t % 3);
            assert_eq!(e.challenger / 6, t % 3);
        }
    }
    assert_eq!(art.regret.len(), 4);
}

#[test]
fn stats_and_plot_data_agree() {
    let cfg = ExperimentConfig::new(
        Benchmark::Clustered { params: Default::default() },
        vec![Algorithm::Rucb],
        200,
        derive_seeds(8, 3),
    );
    let art = run_experiment(&cfg).unwrap();
    let all: Vec<_> = art.runs.iter().flat_map(|r| r.events.clone()).collect();
    assert_eq!(art.stats[0].1, query_stats(&all).unwrap());
    let plot = emit_plot_data(&art);
    assert_eq!(plot.trajectory.len(), 200);
    let conserved: u64 = plot.histogram.iter().map(|r| r.frequency * r.pair_count).sum();
    assert_eq!(conserved, 600);
    let diag = art.diagnostics.unwrap();
    assert_eq!(diag.num_clusters, 4);
    assert_eq!(diag.effective_cluster_size, 5);
}
