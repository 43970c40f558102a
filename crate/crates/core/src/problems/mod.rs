//! Benchmark instances.
//!
//! Every generator returns an [`Instance`]: candidates with features, a
//! ground-truth preference matrix and, for contextual problems, the pool of
//! each candidate.

mod contextual;
mod dtlz;
mod rankings;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::depgraph::{
    similarity_for_table, soft_cluster, build_graph, ClusterAssignment, SimilarityGraph,
    SimilarityMetric,
};
use crate::{CandidateSet, Error, FeatureTable, PreferenceMatrix, Result};

pub use contextual::{
    contextual_instance, read_embeddings_binary, read_embeddings_csv, read_rewards,
    synthetic_contextual, write_embeddings_binary, ContextPool, ContextualInstance,
    EMBEDDING_MAGIC,
};
pub use dtlz::{
    dtlz2_front, dtlz2_objectives, dtlz_instance, gaussian_utility, read_points, read_points_path,
    DtlzParams, DtlzPoint, DtlzSource, DTLZ_DECISION_DIMS, DTLZ_OBJECTIVES,
};
pub use rankings::{matrix_from_counts, matrix_from_rankings, pairwise_counts_from_csv, RankingDataset};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `P(i beats j) = 1 / (1 + exp(-(f_i - f_j)))`.
pub fn bradley_terry(f_i: f64, f_j: f64) -> f64 {
    sigmoid(f_i - f_j)
}

/// A benchmark problem ready for simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub name: String,
    pub candidates: CandidateSet,
    pub preferences: PreferenceMatrix,
    /// Context of each candidate; `None` for a single context.
    pub pool_of: Option<Vec<usize>>,
    /// Metrics whose thresholded graphs are merged by default.
    pub metrics: Vec<SimilarityMetric>,
    /// The intended best candidate, when the generator fixes one.
    pub designated_winner: Option<usize>,
}

impl Instance {
    pub fn k(&self) -> usize {
        self.candidates.k()
    }

    /// Candidates of each context.
    pub fn pools(&self) -> Vec<Vec<usize>> {
        match &self.pool_of {
            None => vec![(0..self.k()).collect()],
            Some(pool_of) => {
                let n = pool_of.iter().max().map_or(0, |m| m + 1);
                let mut pools = vec![Vec::new(); n];
                for (i, &p) in pool_of.iter().enumerate() {
                    pools[p].push(i);
                }
                pools
            }
        }
    }

    /// Union of the thresholded graphs of the instance's metrics, or of the
    /// single `metric` when given. Candidates without features get no edges.
    pub fn similarity_graph(&self, threshold: f64, metric: Option<SimilarityMetric>) -> Result<SimilarityGraph> {
        let Some(table) = self.candidates.features() else {
            return Ok(SimilarityGraph::empty(self.k()));
        };
        let metrics = metric.map_or_else(|| self.metrics.clone(), |m| vec![m]);
        let mut graph: Option<SimilarityGraph> = None;
        for m in metrics {
            let (sim, used) = similarity_for_table(table, Some(m))?;
            let g = build_graph(&sim, threshold, used);
            graph = Some(match graph {
                None => g,
                Some(prev) => prev.union(&g)?,
            });
        }
        Ok(graph.unwrap_or_else(|| SimilarityGraph::empty(self.k())))
    }

    pub fn clusters(&self, threshold: f64, metric: Option<SimilarityMetric>) -> Result<(SimilarityGraph, ClusterAssignment)> {
        let graph = self.similarity_graph(threshold, metric)?;
        let clusters = soft_cluster(&graph);
        Ok((graph, clusters))
    }
}

fn default_metrics(table: &FeatureTable) -> Vec<SimilarityMetric> {
    if table.is_purely_numeric() {
        vec![SimilarityMetric::EuclideanMinmax]
    } else {
        vec![SimilarityMetric::Gower]
    }
}

/// Instance from an item table (CSV with an optional `label` column) and a
/// preference matrix.
pub fn ranking_instance(name: &str, items: FeatureTable, labels: Option<Vec<String>>, preferences: PreferenceMatrix) -> Result<Instance> {
    let k = preferences.k();
    let labels = labels.unwrap_or_else(|| (1..=k).map(|i| format!("item {i}")).collect());
    let metrics = default_metrics(&items);
    Ok(Instance {
        name: name.into(),
        candidates: CandidateSet::new(labels, Some(items))?,
        designated_winner: crate::find_condorcet_winner(&preferences),
        preferences,
        pool_of: None,
        metrics,
    })
}

/// Reads preferences for `k` items from a file, by layout:
/// `.order` files, pairwise judgement CSVs (header naming a user column) or
/// one full ranking per row.
pub fn load_preferences(path: impl AsRef<Path>, k: usize) -> Result<PreferenceMatrix> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "order") {
        return matrix_from_rankings(&RankingDataset::from_order_path(path)?);
    }
    let text = std::fs::read_to_string(path)?;
    let header = text.lines().next().unwrap_or_default().to_ascii_lowercase();
    if header.contains("user") {
        let counts = pairwise_counts_from_csv(k, text.as_bytes())?;
        return matrix_from_counts(k, &counts);
    }
    let data = RankingDataset::from_csv_reader(text.as_bytes())?;
    if data.k() != k {
        return Err(Error::data(format!("rankings cover {} items, expected {k}", data.k())));
    }
    matrix_from_rankings(&data)
}

/// Bundled sample data with the layout of the public ranking datasets.
///
/// Item tables follow the published feature schemas; the rankings are
/// synthetic, so only the toy data's own winner is meaningful.
pub mod fixtures {
    pub const SUSHI_ITEMS: &str = include_str!("../../data/sushi_items.csv");
    pub const SUSHI_RANKINGS: &str = include_str!("../../data/sushi_rankings.csv");
    pub const CAR_ITEMS: &str = include_str!("../../data/car_items.csv");
    pub const CAR_RANKINGS: &str = include_str!("../../data/car_rankings.csv");
}

/// Environment variable naming a real sushi rankings file.
pub const SUSHI_ENV: &str = "DUELKIT_SUSHI_RANKINGS";
/// Environment variable naming a real car preference file.
pub const CAR_ENV: &str = "DUELKIT_CAR_RANKINGS";

fn bundled(name: &str, items: &str, rankings: &str, source: Option<&Path>) -> Result<Instance> {
    let (labels, table) = FeatureTable::from_labeled_csv_reader(items.as_bytes())?;
    let preferences = match source {
        Some(path) => load_preferences(path, table.len())?,
        None => matrix_from_rankings(&RankingDataset::from_csv_reader(rankings.as_bytes())?)?,
    };
    if preferences.k() != table.len() {
        return Err(Error::data(format!(
            "{name}: preferences cover {} items, item table has {}",
            preferences.k(),
            table.len()
        )));
    }
    ranking_instance(name, table, labels, preferences)
}

/// Sushi items with preferences from `rankings`, or from the bundled sample
/// rankings when `None`.
pub fn sushi_instance(rankings: Option<&Path>) -> Result<Instance> {
    bundled("sushi", fixtures::SUSHI_ITEMS, fixtures::SUSHI_RANKINGS, rankings)
}

/// Car items with preferences from `rankings`, or from the bundled sample
/// rankings when `None`.
pub fn car_instance(rankings: Option<&Path>) -> Result<Instance> {
    bundled("car", fixtures::CAR_ITEMS, fixtures::CAR_RANKINGS, rankings)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ClusteredParams {
    pub clusters: usize,
    pub per_cluster: usize,
    /// Utility step between consecutive clusters.
    pub cluster_gap: f64,
    /// Utility step between consecutive arms of one cluster.
    pub member_gap: f64,
    pub seed: u64,
}

impl Default for ClusteredParams {
    fn default() -> Self {
        Self { clusters: 4, per_cluster: 5, cluster_gap: 0.6, member_gap: 0.08, seed: 0 }
    }
}

/// Arms in well separated feature clusters whose members are nearly
/// interchangeable: Bradley-Terry utilities are a per-cluster level minus a
/// small member offset, and features are a cluster corner plus jitter.
/// Candidate order is shuffled.
pub fn clustered_instance(params: ClusteredParams) -> Result<Instance> {
    let ClusteredParams { clusters, per_cluster, cluster_gap, member_gap, seed } = params;
    if clusters == 0 || per_cluster == 0 || clusters * per_cluster < 2 {
        return Err(Error::invalid("clustered instance needs at least two arms"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = clusters * per_cluster;
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut rng);
    // Cluster centres on the vertices of a hypercube-like grid, one axis per
    // bit of the cluster id.
    let dims = (usize::BITS - (clusters.max(2) - 1).leading_zeros()) as usize;
    let mut utility = vec![0.0; k];
    let mut rows = vec![Vec::new(); k];
    let mut labels = vec![String::new(); k];
    for (slot, &arm) in order.iter().enumerate() {
        let (c, r) = (slot / per_cluster, slot % per_cluster);
        utility[arm] = cluster_gap * (clusters - 1 - c) as f64 - member_gap * r as f64;
        rows[arm] = (0..dims)
            .map(|d| ((c >> d) & 1) as f64 + rng.random_range(-0.03..0.03))
            .collect();
        labels[arm] = format!("c{}-{}", c + 1, r + 1);
    }
    let preferences = PreferenceMatrix::from_upper(k, |i, j| bradley_terry(utility[i], utility[j]))?;
    Ok(Instance {
        name: "clustered".into(),
        candidates: CandidateSet::new(labels, Some(FeatureTable::from_numeric_rows("x", &rows)?))?,
        designated_winner: Some(order[0]),
        preferences,
        pool_of: None,
        metrics: vec![SimilarityMetric::EuclideanMinmax],
    })
}

/// A random instance with a Condorcet winner and 2-D features.
///
/// Entries not involving the winner are uniform in `[0.1, 0.9]`; the winner
/// beats everyone with probability uniform in `[0.6, 0.9]`.
pub fn random_condorcet_instance(k: usize, seed: u64) -> Result<Instance> {
    if k < 2 {
        return Err(Error::invalid(format!("need K >= 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let winner = rng.random_range(0..k);
    let mut upper = vec![0.5; k * k];
    for i in 0..k {
        for j in (i + 1)..k {
            upper[i * k + j] = if i == winner {
                rng.random_range(0.6..0.9)
            } else if j == winner {
                1.0 - rng.random_range(0.6..0.9)
            } else {
                rng.random_range(0.1..0.9)
            };
        }
    }
    let preferences = PreferenceMatrix::from_upper(k, |i, j| upper[i * k + j])?;
    let rows: Vec<Vec<f64>> = (0..k).map(|_| vec![rng.random(), rng.random()]).collect();
    Ok(Instance {
        name: "random".into(),
        candidates: CandidateSet::new(
            (1..=k).map(|i| format!("arm {i}")).collect(),
            Some(FeatureTable::from_numeric_rows("x", &rows)?),
        )?,
        preferences,
        pool_of: None,
        metrics: vec![SimilarityMetric::EuclideanMinmax],
        designated_winner: Some(winner),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::find_condorcet_winner;

    #[test]
    fn link_functions() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(1.0) - 0.7310585786300049).abs() < 1e-15);
        assert!((bradley_terry(3f64.ln(), 0.0) - 0.75).abs() < 1e-12);
        assert_eq!(bradley_terry(0.3, 0.3), 0.5);
    }

    #[test]
    fn clustered_instance_has_four_components() {
        let inst = clustered_instance(ClusteredParams::default()).unwrap();
        assert_eq!(inst.k(), 20);
        assert_eq!(find_condorcet_winner(&inst.preferences), inst.designated_winner);
        let (_, clusters) = inst.clusters(0.85, None).unwrap();
        assert_eq!(clusters.num_groups(), 4);
        assert!(clusters.groups().iter().all(|g| g.len() == 5));
        for g in clusters.groups() {
            let tag = |i: usize| inst.candidates.label(i).split('-').next().unwrap().to_owned();
            assert!(g.iter().all(|&i| tag(i) == tag(g[0])));
        }
    }

    #[test]
    fn random_instances_have_their_winner() {
        for seed in 0..50 {
            let inst = random_condorcet_instance(5, seed).unwrap();
            assert_eq!(find_condorcet_winner(&inst.preferences), inst.designated_winner);
        }
    }

    #[test]
    fn bundled_ranking_instances_load() {
        let sushi = sushi_instance(None).unwrap();
        assert_eq!(sushi.k(), 10);
        assert_eq!(sushi.candidates.position("toro"), Some(7));
        let car = car_instance(None).unwrap();
        assert_eq!(car.k(), 10);
        let (graph, _) = sushi.clusters(0.85, None).unwrap();
        assert!(!graph.edges().is_empty() && graph.edges().len() < 45);
    }
}
