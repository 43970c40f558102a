//! `duelkit`: run dueling-bandit benchmarks, inspect run directories, print
//! theory constants and serve live elicitation sessions.
//!
//! Exit codes: 0 success, 2 bad configuration, 3 unreadable or malformed
//! data, 1 anything else (for example a port already in use).

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use duelkit_core::bounds::{concentration_time, dependency_factor};
use duelkit_core::depgraph::{AnnotatorSpec, SimilarityMetric, DEFAULT_SIMILARITY_THRESHOLD, DEFAULT_W_FLOOR};
use duelkit_core::engine::{Algorithm, DEFAULT_ALPHA};
use duelkit_core::harness::{
    derive_seeds, read_run_dir, run_experiment, write_run_dir, Benchmark, ExperimentConfig, RunArtifact,
};
use duelkit_core::problems::{ClusteredParams, DtlzParams};
use duelkit_service::{ServiceConfig, DEFAULT_MAX_K};

#[derive(Parser)]
#[command(name = "duelkit", version, about = "Dueling-bandit experiments with dependency-augmented bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate algorithms on a benchmark and write a run directory.
    Bench(Box<BenchArgs>),
    /// Summarize a run directory.
    Stats {
        dir: PathBuf,
        /// Print the full summary as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Print theory constants.
    Diag(DiagArgs),
    /// Serve the HTTP session API.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Problem {
    Sushi,
    Car,
    Dtlz2,
    DtlzFile,
    Contextual,
    Clustered,
    RandomCondorcet,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment config as written to `config.json`; replaces the problem
    /// and run flags.
    #[arg(long, conflicts_with = "problem")]
    config: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "config")]
    problem: Option<Problem>,
    /// Algorithms to run, repeatable or comma separated.
    #[arg(long = "algo", value_delimiter = ',', value_parser = parse_algorithm, default_values = ["rucb", "dts", "ipea-rucb", "ipea-dts"])]
    algorithms: Vec<Algorithm>,
    /// Exploration parameter, 0.1 unless set here or in `--config`.
    /// Several values run a sweep with one subdirectory per value.
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    rounds: u64,
    /// Number of seeds derived from `--seed`.
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_SIMILARITY_THRESHOLD)]
    sim_threshold: f64,
    /// Single similarity metric; the problem's default otherwise.
    #[arg(long, value_parser = parse_metric)]
    metric: Option<SimilarityMetric>,
    /// oracle, constant:W, noisy:SD, external:URL or external:cmd:PROGRAM ARGS
    #[arg(long, default_value = "oracle", value_parser = parse_annotator)]
    annotator: AnnotatorSpec,
    /// Dependencies weaker than this are not stored.
    #[arg(long, default_value_t = DEFAULT_W_FLOOR)]
    w_floor: f64,
    /// Also record each duel as evidence for pairs it is related to.
    #[arg(long)]
    reverse_dependencies: bool,
    /// Confidence level for the diagnostics in `stats.json`.
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct DataArgs {
    /// Rankings file for sushi or car; the bundled sample otherwise.
    #[arg(long)]
    rankings: Option<PathBuf>,
    /// Solutions CSV for dtlz-file: decision values then objectives.
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    decision_dims: usize,
    /// Pareto-front sample size for dtlz2.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0.3)]
    sigma: f64,
    #[arg(long, default_value_t = 0.2)]
    tau: f64,
    /// Seed for generated problem data, independent of the run seeds.
    #[arg(long, default_value_t = 0)]
    problem_seed: u64,
    /// Reward scores for contextual; synthetic pools when omitted.
    #[arg(long, requires = "embeddings")]
    rewards: Option<PathBuf>,
    #[arg(long, requires = "rewards")]
    embeddings: Option<PathBuf>,
    /// Candidates for random-condorcet.
    #[arg(long, default_value_t = 10)]
    k: usize,
}

#[derive(Args)]
struct DiagArgs {
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long)]
    k: usize,
    /// With both gaps, also print the pair coefficient for this weight.
    #[arg(long, default_value_t = 1.0)]
    w_min: f64,
    #[arg(long, requires = "gap_j")]
    gap_i: Option<f64>,
    #[arg(long, requires = "gap_i")]
    gap_j: Option<f64>,
}

#[derive(Args)]
struct ServeArgs {
    /// Overridden by `DUELKIT_PORT`.
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, default_value_t = DEFAULT_MAX_K)]
    max_k: usize,
    /// Keep a JSON archive of every session here.
    #[arg(long)]
    snapshot_dir: Option<PathBuf>,
    /// Browser origin allowed by CORS; any when omitted.
    #[arg(long)]
    cors_origin: Option<String>,
}

enum Failure {
    Config(String),
    Data(String),
    Other(String),
}

impl From<duelkit_core::Error> for Failure {
    fn from(e: duelkit_core::Error) -> Self {
        if e.is_data_error() {
            Failure::Data(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: duelkit_core::Error| e.to_string())
}

fn parse_metric(s: &str) -> Result<SimilarityMetric, String> {
    s.parse().map_err(|e: duelkit_core::Error| e.to_string())
}

fn parse_annotator(s: &str) -> Result<AnnotatorSpec, String> {
    s.parse().map_err(|e: duelkit_core::Error| e.to_string())
}

fn benchmark(problem: Problem, d: DataArgs) -> Result<Benchmark, Failure> {
    let dtlz = DtlzParams { n: d.n, sigma: d.sigma, tau: d.tau, seed: d.problem_seed };
    Ok(match problem {
        Problem::Sushi => Benchmark::Sushi { rankings: d.rankings },
        Problem::Car => Benchmark::Car { rankings: d.rankings },
        Problem::Dtlz2 => Benchmark::Dtlz2 { params: dtlz },
        Problem::DtlzFile => Benchmark::DtlzFile {
            path: d.points.ok_or_else(|| Failure::Config("dtlz-file needs --points".into()))?,
            decision_dims: d.decision_dims,
            params: dtlz,
        },
        Problem::Contextual => {
            let mut b = Benchmark::synthetic_contextual(d.problem_seed);
            if let Benchmark::Contextual { rewards, embeddings, .. } = &mut b {
                (*rewards, *embeddings) = (d.rewards, d.embeddings);
            }
            b
        }
        Problem::Clustered => {
            Benchmark::Clustered { params: ClusteredParams { seed: d.problem_seed, ..Default::default() } }
        }
        Problem::RandomCondorcet => Benchmark::RandomCondorcet { k: d.k, seed: d.problem_seed },
    })
}

fn bench(args: BenchArgs) -> Result<(), Failure> {
    let base = match args.config {
        Some(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?
        }
        None => {
            let problem = args.problem.expect("clap requires --problem without --config");
            ExperimentConfig {
                metric: args.metric,
                threshold: args.sim_threshold,
                annotator: args.annotator,
                w_floor: args.w_floor,
                reverse_dependencies: args.reverse_dependencies,
                delta: args.delta,
                ..ExperimentConfig::new(
                    benchmark(problem, args.data)?,
                    args.algorithms,
                    args.rounds,
                    derive_seeds(args.seed, args.seeds),
                )
            }
        }
    };
    let alphas = if args.alpha.is_empty() { vec![base.alpha] } else { args.alpha };
    let sweep = alphas.len() > 1;
    let mut runs = Vec::new();
    for alpha in alphas {
        let config = ExperimentConfig { alpha, ..base.clone() };
        config.validate()?;
        let dir = if sweep { args.out.join(format!("alpha-{alpha}")) } else { args.out.clone() };
        runs.push((config, dir));
    }
    // Load once up front so a bad file fails before any simulation.
    base.benchmark.load()?;
    for (config, dir) in runs {
        let artifact = run_experiment(&config)?;
        write_run_dir(&artifact, &dir)?;
        if sweep {
            println!("alpha = {}", config.alpha);
        }
        print_summary(&artifact);
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn print_summary(artifact: &RunArtifact) {
    println!("{} (K = {}, {} rounds, {} seeds)", artifact.instance, artifact.k, artifact.config.rounds, artifact.config.seeds.len());
    println!("{:<10} {:>14} {:>12} {:>8} {:>10} {:>8}", "algorithm", "final regret", "std", "pairs", "entropy", "norm");
    for (algo, stats) in &artifact.stats {
        let summary = artifact.summary(*algo);
        let (mean, std) = match summary.and_then(|s| Some((*s.mean.last()?, *s.std.last()?))) {
            Some((m, s)) => (format!("{m:.3}"), format!("{s:.3}")),
            None => ("n/a".into(), "n/a".into()),
        };
        println!(
            "{:<10} {:>14} {:>12} {:>8} {:>10.4} {:>7.2}%",
            algo.as_str(),
            mean,
            std,
            stats.unique_pairs,
            stats.entropy_bits,
            100.0 * stats.normalized_entropy
        );
    }
}

fn stats(dir: &Path, json: bool) -> Result<(), Failure> {
    if !dir.is_dir() {
        return Err(Failure::Data(format!("{} is not a run directory", dir.display())));
    }
    let artifact = read_run_dir(dir)?;
    if json {
        let summary = serde_json::json!({
            "instance": artifact.instance,
            "k": artifact.k,
            "queries": artifact.stats.iter().map(|(a, s)| (a.as_str(), s)).collect::<std::collections::BTreeMap<_, _>>(),
            "final_regret": artifact.regret.iter().map(|r| (r.algo.as_str(), serde_json::json!({
                "mean": r.mean.last(),
                "std": r.std.last(),
            }))).collect::<std::collections::BTreeMap<_, _>>(),
            "diagnostics": artifact.diagnostics,
        });
        println!("{}", serde_json::to_string_pretty(&summary).map_err(|e| Failure::Other(e.to_string()))?);
    } else {
        print_summary(&artifact);
        if let Some(diag) = &artifact.diagnostics {
            println!(
                "clusters {} (effective size {}), C(delta = {}) {}",
                diag.num_clusters,
                diag.effective_cluster_size,
                diag.delta,
                diag.concentration_time.map_or("undefined".into(), |c| format!("{c:.6e}"))
            );
        }
    }
    Ok(())
}

fn diag(args: &DiagArgs) -> Result<(), Failure> {
    if args.k < 2 {
        return Err(Failure::Config(format!("need at least 2 candidates, got {}", args.k)));
    }
    if args.alpha.is_nan() || args.alpha <= 0.0 {
        return Err(Failure::Config(format!("alpha must be positive, got {}", args.alpha)));
    }
    if !(args.delta > 0.0 && args.delta < 1.0) {
        return Err(Failure::Config(format!("delta must lie in (0, 1), got {}", args.delta)));
    }
    match concentration_time(args.k, args.alpha, args.delta) {
        Ok(c) => println!("C(delta) = {c:e}"),
        Err(e) => println!("C(delta) undefined: {e}"),
    }
    if let (Some(gi), Some(gj)) = (args.gap_i, args.gap_j) {
        match dependency_factor(args.alpha, args.w_min, gi, gj) {
            Ok(d) => println!("D^w = {d:e}"),
            Err(e) => println!("D^w unbounded: {e}"),
        }
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), Failure> {
    let port = match std::env::var("DUELKIT_PORT") {
        Ok(v) => v.trim().parse().map_err(|_| Failure::Config(format!("DUELKIT_PORT must be a port number, got {v:?}")))?,
        Err(_) => args.port,
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let config = ServiceConfig { max_k: args.max_k, snapshot_dir: args.snapshot_dir, cors_origin: args.cors_origin };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Other(e.to_string()))?;
    runtime
        .block_on(duelkit_service::serve(SocketAddr::new(args.host, port), config))
        .map_err(|e| Failure::Other(format!("server failed: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench(args) => bench(*args),
        Command::Stats { dir, json } => stats(&dir, json),
        Command::Diag(args) => diag(&args),
        Command::Serve(args) => serve(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
