use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{cumulative_regret, mean_std, query_stats_of_pairs, Diagnostics, ExperimentConfig, QueryStats, RegretSummary, RunArtifact, SeedRun};
use crate::engine::{read_events_jsonl, write_events_jsonl, Algorithm, RoundEvent};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub round: u64,
    pub algo: Algorithm,
    pub mean_regret: f64,
    pub std_regret: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub frequency: u64,
    pub pair_count: u64,
    pub algo: Algorithm,
}

/// Tidy series for external plotting.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotData {
    pub trajectory: Vec<TrajectoryRow>,
    pub histogram: Vec<HistogramRow>,
}

impl PlotData {
    pub fn write_trajectory_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(&self.trajectory, writer)
    }

    pub fn write_histogram_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(&self.histogram, writer)
    }
}

fn write_rows<T: Serialize, W: Write>(rows: &[T], writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for row in rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn emit_plot_data(artifact: &RunArtifact) -> PlotData {
    let trajectory = artifact
        .regret
        .iter()
        .flat_map(|s| {
            s.mean.iter().zip(&s.std).enumerate().map(move |(t, (&m, &sd))| TrajectoryRow {
                round: t as u64 + 1,
                algo: s.algo,
                mean_regret: m,
                std_regret: sd,
            })
        })
        .collect();
    let histogram = artifact
        .stats
        .iter()
        .flat_map(|(algo, s)| {
            s.histogram.iter().map(move |(&frequency, &pair_count)| HistogramRow { frequency, pair_count, algo: *algo })
        })
        .collect();
    PlotData { trajectory, histogram }
}

#[derive(Serialize, Deserialize)]
struct FinalRegret {
    mean: f64,
    std: f64,
}

#[derive(Serialize, Deserialize)]
struct StatsFile {
    instance: String,
    k: usize,
    queries: BTreeMap<Algorithm, QueryStats>,
    final_regret: BTreeMap<Algorithm, FinalRegret>,
    diagnostics: Option<Diagnostics>,
}

fn events_file(algo: Algorithm, seed: u64) -> String {
    format!("events-{}-{seed}.jsonl", algo.as_str())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes `config.json`, one `events-<algo>-<seed>.jsonl` per run,
/// `trajectory.csv`, `query_histogram.csv` and `stats.json` into `dir`.
pub fn write_run_dir(artifact: &RunArtifact, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_json(&dir.join("config.json"), &artifact.config)?;
    for run in &artifact.runs {
        let mut w = BufWriter::new(File::create(dir.join(events_file(run.algo, run.seed)))?);
        write_events_jsonl(&run.events, &mut w)?;
        w.flush()?;
    }
    let plot = emit_plot_data(artifact);
    plot.write_trajectory_csv(File::create(dir.join("trajectory.csv"))?)?;
    plot.write_histogram_csv(File::create(dir.join("query_histogram.csv"))?)?;
    let stats = StatsFile {
        instance: artifact.instance.clone(),
        k: artifact.k,
        queries: artifact.stats.iter().cloned().collect(),
        final_regret: artifact
            .regret
            .iter()
            .filter_map(|s| Some((s.algo, FinalRegret { mean: *s.mean.last()?, std: *s.std.last()? })))
            .collect(),
        diagnostics: artifact.diagnostics.clone(),
    };
    write_json(&dir.join("stats.json"), &stats)
}

/// Reads a run directory back, recomputing trajectories and query
/// statistics from the event logs.
pub fn read_run_dir(dir: impl AsRef<Path>) -> Result<RunArtifact> {
    let dir = dir.as_ref();
    let config: ExperimentConfig = serde_json::from_reader(BufReader::new(File::open(dir.join("config.json"))?))?;
    let stored: StatsFile = serde_json::from_reader(BufReader::new(File::open(dir.join("stats.json"))?))?;
    let mut algorithms = config.algorithms.clone();
    algorithms.sort();
    algorithms.dedup();
    let mut seeds = config.seeds.clone();
    seeds.sort_unstable();
    let mut runs = Vec::new();
    let mut regret = Vec::new();
    let mut stats = Vec::new();
    for &algo in &algorithms {
        let mut of_algo = Vec::new();
        for &seed in &seeds {
            let path = dir.join(events_file(algo, seed));
            let events: Vec<RoundEvent> = read_events_jsonl(BufReader::new(File::open(&path)?))?;
            if events.iter().any(|e| e.algo != algo || e.seed != seed) {
                return Err(Error::data(format!("{} holds events of another run", path.display())));
            }
            let cumulative_regret = cumulative_regret(&events).unwrap_or_default();
            of_algo.push(SeedRun { algo, seed, events, cumulative_regret });
        }
        if of_algo.iter().all(|r| r.cumulative_regret.len() as u64 == config.rounds) {
            let series: Vec<&[f64]> = of_algo.iter().map(|r| r.cumulative_regret.as_slice()).collect();
            let (mean, std) = mean_std(&series);
            regret.push(RegretSummary { algo, mean, std });
        }
        let pairs = of_algo.iter().flat_map(|r| r.events.iter().map(RoundEvent::unordered_pair));
        stats.push((algo, query_stats_of_pairs(pairs)?));
        runs.extend(of_algo);
    }
    Ok(RunArtifact { config, instance: stored.instance, k: stored.k, runs, regret, stats, diagnostics: stored.diagnostics })
}
