//! Multi-seed experiments and their statistics.
//!
//! [`run_experiment`] simulates every `(algorithm, seed)` pair of an
//! [`ExperimentConfig`] in parallel and reduces the logs deterministically:
//! runs are ordered by algorithm then seed before any aggregation, so the
//! artifact does not depend on scheduling or on the order seeds are listed.

mod artifact;
mod diag;
mod stats;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depgraph::{Annotator, AnnotatorSpec, SimilarityMetric, DEFAULT_SIMILARITY_THRESHOLD, DEFAULT_W_FLOOR};
use crate::engine::{annotator_seed, Algorithm, EngineConfig, EngineState, RoundEvent, SimulatedOracle, DEFAULT_ALPHA};
use crate::problems::{
    car_instance, clustered_instance, contextual_instance, dtlz_instance, random_condorcet_instance,
    read_points_path, sushi_instance, synthetic_contextual, ClusteredParams, DtlzParams, DtlzSource, Instance,
    DTLZ_DECISION_DIMS,
};
use crate::{Error, Result};

pub use artifact::{
    emit_plot_data, read_run_dir, write_run_dir, HistogramRow, PlotData, TrajectoryRow,
};
pub use diag::{bounds_cover_truth, theory_diagnostics, Diagnostics, PairFactor};
pub use stats::{entropy_bits, query_stats, query_stats_of_pairs, QueryStats};

/// SplitMix64 output for `master + index`. Seed `i` of a run depends only on
/// the master seed and `i`, so adding seeds leaves earlier ones unchanged.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n` per-run seeds derived from `master`.
pub fn derive_seeds(master: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| derive_seed(master, i)).collect()
}

/// Problem to simulate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "kebab-case")]
pub enum Benchmark {
    /// Bundled sample rankings unless a rankings file is given.
    Sushi { rankings: Option<PathBuf> },
    Car { rankings: Option<PathBuf> },
    Dtlz2 {
        #[serde(flatten)]
        params: DtlzParams,
    },
    /// Solutions read from a CSV of decision values then objectives.
    DtlzFile {
        path: PathBuf,
        #[serde(default = "default_decision_dims")]
        decision_dims: usize,
        #[serde(flatten)]
        params: DtlzParams,
    },
    /// Reward and embedding files, or a synthetic pool set when absent.
    Contextual {
        rewards: Option<PathBuf>,
        embeddings: Option<PathBuf>,
        #[serde(default = "default_pools")]
        pools: usize,
        #[serde(default = "default_per_pool")]
        per_pool: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        seed: u64,
    },
    Clustered {
        #[serde(flatten)]
        params: ClusteredParams,
    },
    RandomCondorcet { k: usize, seed: u64 },
}

fn default_decision_dims() -> usize {
    DTLZ_DECISION_DIMS
}

fn default_pools() -> usize {
    5
}

fn default_per_pool() -> usize {
    20
}

fn default_dim() -> usize {
    768
}

impl Benchmark {
    /// Synthetic contextual pools of the default shape.
    pub fn synthetic_contextual(seed: u64) -> Self {
        Benchmark::Contextual {
            rewards: None,
            embeddings: None,
            pools: default_pools(),
            per_pool: default_per_pool(),
            dim: default_dim(),
            seed,
        }
    }

    pub fn load(&self) -> Result<Instance> {
        match self {
            Benchmark::Sushi { rankings } => sushi_instance(rankings.as_deref()),
            Benchmark::Car { rankings } => car_instance(rankings.as_deref()),
            Benchmark::Dtlz2 { params } => dtlz_instance(DtlzSource::Dtlz2, *params),
            Benchmark::DtlzFile { path, decision_dims, params } => {
                let points = read_points_path(path, *decision_dims)?;
                let n = points.len();
                dtlz_instance(DtlzSource::Points(points), DtlzParams { n, ..*params })
            }
            Benchmark::Contextual { rewards, embeddings, pools, per_pool, dim, seed } => match (rewards, embeddings) {
                (Some(r), Some(e)) => contextual_instance(r, e)?.to_instance(),
                (None, None) => synthetic_contextual(*pools, *per_pool, *dim, *seed)?.to_instance(),
                _ => Err(Error::invalid("contextual problems need both rewards and embeddings, or neither")),
            },
            Benchmark::Clustered { params } => clustered_instance(*params),
            Benchmark::RandomCondorcet { k, seed } => random_condorcet_instance(*k, *seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub benchmark: Benchmark,
    pub algorithms: Vec<Algorithm>,
    pub alpha: f64,
    pub rounds: u64,
    pub seeds: Vec<u64>,
    /// Single metric for the similarity graph; the benchmark's defaults
    /// when `None`.
    #[serde(default)]
    pub metric: Option<SimilarityMetric>,
    pub threshold: f64,
    pub annotator: AnnotatorSpec,
    #[serde(default = "default_w_floor")]
    pub w_floor: f64,
    #[serde(default)]
    pub reverse_dependencies: bool,
    /// Confidence level for the theory diagnostics.
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_w_floor() -> f64 {
    DEFAULT_W_FLOOR
}

fn default_delta() -> f64 {
    0.1
}

impl ExperimentConfig {
    /// Defaults: `alpha = 0.1`, threshold 0.85, oracle weights.
    pub fn new(benchmark: Benchmark, algorithms: Vec<Algorithm>, rounds: u64, seeds: Vec<u64>) -> Self {
        Self {
            benchmark,
            algorithms,
            alpha: DEFAULT_ALPHA,
            rounds,
            seeds,
            metric: None,
            threshold: DEFAULT_SIMILARITY_THRESHOLD,
            annotator: AnnotatorSpec::Oracle,
            w_floor: DEFAULT_W_FLOOR,
            reverse_dependencies: false,
            delta: default_delta(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::invalid("need at least one round"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("need at least one seed"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::invalid("need at least one algorithm"));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::invalid("seeds must be distinct"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::invalid(format!("similarity threshold {} outside [0, 1]", self.threshold)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("delta {} outside (0, 1)", self.delta)));
        }
        EngineConfig { w_floor: self.w_floor, ..EngineConfig::new(Algorithm::Rucb, self.alpha, 0) }.validate()
    }

    fn engine_config(&self, algorithm: Algorithm, seed: u64) -> EngineConfig {
        EngineConfig {
            w_floor: self.w_floor,
            reverse_dependencies: self.reverse_dependencies,
            ..EngineConfig::new(algorithm, self.alpha, seed)
        }
    }
}

/// One simulated run.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedRun {
    pub algo: Algorithm,
    pub seed: u64,
    pub events: Vec<RoundEvent>,
    /// Cumulative regret after each round; empty when regret is undefined
    /// (no Condorcet winner).
    pub cumulative_regret: Vec<f64>,
}

/// Cumulative regret after each event; `None` if any event lacks regret.
pub fn cumulative_regret(events: &[RoundEvent]) -> Option<Vec<f64>> {
    let mut total = 0.0;
    events
        .iter()
        .map(|e| {
            total += e.regret?;
            Some(total)
        })
        .collect()
}

/// Mean and population standard deviation across seeds, per round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretSummary {
    pub algo: Algorithm,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl RegretSummary {
    pub fn final_mean(&self) -> Option<f64> {
        self.mean.last().copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunArtifact {
    pub config: ExperimentConfig,
    pub instance: String,
    pub k: usize,
    /// Ordered by algorithm, then seed.
    pub runs: Vec<SeedRun>,
    /// One per algorithm; absent when regret is undefined.
    pub regret: Vec<RegretSummary>,
    /// Query statistics over all seeds of each algorithm.
    pub stats: Vec<(Algorithm, QueryStats)>,
    /// `None` when the instance lacks a Condorcet winner.
    pub diagnostics: Option<Diagnostics>,
}

impl RunArtifact {
    pub fn summary(&self, algo: Algorithm) -> Option<&RegretSummary> {
        self.regret.iter().find(|s| s.algo == algo)
    }

    pub fn runs_of(&self, algo: Algorithm) -> impl Iterator<Item = &SeedRun> {
        self.runs.iter().filter(move |r| r.algo == algo)
    }
}

/// Simulates one run of `rounds` duels.
pub fn simulate(instance: &Instance, config: &ExperimentConfig, algo: Algorithm, seed: u64) -> Result<SeedRun> {
    let (_, clusters) = instance.clusters(config.threshold, config.metric)?;
    simulate_with(instance, clusters, config, algo, seed)
}

fn simulate_with(
    instance: &Instance,
    clusters: crate::depgraph::ClusterAssignment,
    config: &ExperimentConfig,
    algo: Algorithm,
    seed: u64,
) -> Result<SeedRun> {
    let annotator = Annotator::new(config.annotator.clone(), annotator_seed(seed))?;
    let mut state = EngineState::new(
        config.engine_config(algo, seed),
        instance.candidates.clone(),
        clusters,
        instance.pool_of.clone(),
        Some(instance.preferences.clone()),
        annotator,
    )?;
    let mut oracle = SimulatedOracle::new(instance.preferences.clone(), seed);
    let events = (0..config.rounds)
        .map(|_| state.run_round(&mut oracle))
        .collect::<Result<Vec<_>>>()?;
    let cumulative_regret = cumulative_regret(&events).unwrap_or_default();
    Ok(SeedRun { algo, seed, events, cumulative_regret })
}

/// Mean and population std of equally long series, in the given order.
fn mean_std(series: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let len = series.first().map_or(0, |s| s.len());
    let n = series.len() as f64;
    let mut mean = vec![0.0; len];
    let mut std = vec![0.0; len];
    for t in 0..len {
        let m = series.iter().map(|s| s[t]).sum::<f64>() / n;
        let v = series.iter().map(|s| (s[t] - m) * (s[t] - m)).sum::<f64>() / n;
        mean[t] = m;
        std[t] = v.sqrt();
    }
    (mean, std)
}

/// Runs every algorithm on every seed and aggregates the results.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifact> {
    config.validate()?;
    let instance = config.benchmark.load()?;
    let (_, clusters) = instance.clusters(config.threshold, config.metric)?;
    let mut algorithms = config.algorithms.clone();
    algorithms.sort();
    algorithms.dedup();
    let mut seeds = config.seeds.clone();
    seeds.sort_unstable();
    let jobs: Vec<(Algorithm, u64)> =
        algorithms.iter().flat_map(|&a| seeds.iter().map(move |&s| (a, s))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(algo, seed)| simulate_with(&instance, clusters.clone(), config, algo, seed))
        .collect::<Result<Vec<_>>>()?;

    let mut regret = Vec::new();
    let mut stats = Vec::new();
    for &algo in &algorithms {
        let of_algo: Vec<&SeedRun> = runs.iter().filter(|r| r.algo == algo).collect();
        if of_algo.iter().all(|r| r.cumulative_regret.len() as u64 == config.rounds) {
            let series: Vec<&[f64]> = of_algo.iter().map(|r| r.cumulative_regret.as_slice()).collect();
            let (mean, std) = mean_std(&series);
            regret.push(RegretSummary { algo, mean, std });
        }
        let pairs = of_algo.iter().flat_map(|r| r.events.iter().map(RoundEvent::unordered_pair));
        stats.push((algo, query_stats_of_pairs(pairs)?));
    }
    let diagnostics = theory_diagnostics(
        &instance.preferences,
        &instance.pools(),
        &clusters,
        config.alpha,
        config.delta,
        config.w_floor,
    )
    .ok();
    Ok(RunArtifact {
        config: config.clone(),
        instance: instance.name.clone(),
        k: instance.k(),
        runs,
        regret,
        stats,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(rounds: u64) -> ExperimentConfig {
        ExperimentConfig::new(
            Benchmark::RandomCondorcet { k: 6, seed: 3 },
            vec![Algorithm::Rucb, Algorithm::IpeaDts],
            rounds,
            derive_seeds(11, 3),
        )
    }

    #[test]
    fn seed_derivation_is_prefix_stable() {
        assert_eq!(derive_seeds(5, 3), derive_seeds(5, 10)[..3]);
        assert_ne!(derive_seed(5, 0), derive_seed(5, 1));
        assert_ne!(derive_seed(5, 0), derive_seed(6, 0));
    }

    #[test]
    fn one_round_gives_one_event_per_run() {
        let art = run_experiment(&small(1)).unwrap();
        assert_eq!(art.runs.len(), 6);
        assert!(art.runs.iter().all(|r| r.events.len() == 1));
    }

    #[test]
    fn seed_order_does_not_matter() {
        let cfg = small(40);
        let mut reversed = cfg.clone();
        reversed.seeds.reverse();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&reversed).unwrap();
        assert_eq!(a.runs, b.runs);
        assert_eq!(a.regret, b.regret);
        assert_eq!(a.stats, b.stats);
    }

    #[test]
    fn trajectory_matches_event_log() {
        let art = run_experiment(&small(50)).unwrap();
        for run in &art.runs {
            let mut total = 0.0;
            for (e, &r) in run.events.iter().zip(&run.cumulative_regret) {
                total += e.regret.unwrap();
                assert_eq!(total, r);
            }
        }
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = small(0);
        assert!(cfg.validate().is_err());
        cfg.rounds = 5;
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
        cfg.seeds = vec![1, 1];
        assert!(cfg.validate().is_err());
        cfg.seeds = vec![1];
        cfg.alpha = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let mut cfg = small(10);
        cfg.annotator = AnnotatorSpec::Noisy(0.1);
        cfg.benchmark = Benchmark::Dtlz2 { params: DtlzParams { n: 12, ..Default::default() } };
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"problem\":\"dtlz2\""));
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), cfg);
        let sparse: ExperimentConfig = serde_json::from_str(
            r#"{"benchmark":{"problem":"clustered"},"algorithms":["rucb"],"alpha":0.1,
                "rounds":3,"seeds":[1],"threshold":0.85,"annotator":"constant:1"}"#,
        )
        .unwrap();
        assert_eq!(sparse.benchmark, Benchmark::Clustered { params: ClusteredParams::default() });
    }
}
