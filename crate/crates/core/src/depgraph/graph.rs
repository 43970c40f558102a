use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{SimilarityMatrix, SimilarityMetric};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub s: f64,
}

/// Undirected graph with an edge wherever similarity reaches the threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityGraph {
    k: usize,
    threshold: f64,
    metrics: Vec<SimilarityMetric>,
    /// Edges with `i < j`, sorted.
    edges: Vec<Edge>,
    #[serde(skip)]
    adjacency: Vec<Vec<usize>>,
}

impl SimilarityGraph {
    fn from_edges(k: usize, threshold: f64, metrics: Vec<SimilarityMetric>, mut edges: Vec<Edge>) -> Self {
        edges.sort_by_key(|e| (e.i, e.j));
        let mut adjacency = vec![Vec::new(); k];
        for e in &edges {
            adjacency[e.i].push(e.j);
            adjacency[e.j].push(e.i);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Self { k, threshold, metrics, edges, adjacency }
    }

    /// A graph with no edges: every candidate is its own group.
    pub fn empty(k: usize) -> Self {
        Self::from_edges(k, 1.0, Vec::new(), Vec::new())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn metrics(&self) -> &[SimilarityMetric] {
        &self.metrics
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search(&j).is_ok()
    }

    /// Union of two graphs over the same candidates; shared edges keep the
    /// larger similarity.
    pub fn union(&self, other: &SimilarityGraph) -> Result<SimilarityGraph> {
        if self.k != other.k {
            return Err(Error::invalid("cannot merge graphs over different candidate sets"));
        }
        let mut edges: Vec<Edge> = Vec::with_capacity(self.edges.len() + other.edges.len());
        let mut a = self.edges.iter().peekable();
        let mut b = other.edges.iter().peekable();
        loop {
            let next = match (a.peek(), b.peek()) {
                (Some(x), Some(y)) => match (x.i, x.j).cmp(&(y.i, y.j)) {
                    std::cmp::Ordering::Less => *a.next().unwrap(),
                    std::cmp::Ordering::Greater => *b.next().unwrap(),
                    std::cmp::Ordering::Equal => {
                        let (x, y) = (a.next().unwrap(), b.next().unwrap());
                        Edge { s: x.s.max(y.s), ..*x }
                    }
                },
                (Some(_), None) => *a.next().unwrap(),
                (None, Some(_)) => *b.next().unwrap(),
                (None, None) => break,
            };
            edges.push(next);
        }
        let mut metrics = self.metrics.clone();
        for m in &other.metrics {
            if !metrics.contains(m) {
                metrics.push(*m);
            }
        }
        Ok(Self::from_edges(self.k, self.threshold.min(other.threshold), metrics, edges))
    }

    /// Edge list as written to the graph cache: `[{i, j, s}]`, 1-based.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "k": self.k,
            "threshold": self.threshold,
            "metrics": self.metrics,
            "edges": self.edges.iter()
                .map(|e| serde_json::json!({"i": e.i + 1, "j": e.j + 1, "s": e.s}))
                .collect::<Vec<_>>(),
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Cached {
            k: usize,
            threshold: f64,
            #[serde(default)]
            metrics: Vec<SimilarityMetric>,
            edges: Vec<Edge>,
        }
        let cached: Cached = serde_json::from_value(value.clone())?;
        let mut edges = Vec::with_capacity(cached.edges.len());
        for e in cached.edges {
            if e.i == 0 || e.j == 0 || e.i > cached.k || e.j > cached.k || e.i == e.j {
                return Err(Error::data(format!("bad cached edge ({}, {})", e.i, e.j)));
            }
            let (i, j) = if e.i < e.j { (e.i, e.j) } else { (e.j, e.i) };
            edges.push(Edge { i: i - 1, j: j - 1, s: e.s });
        }
        Ok(Self::from_edges(cached.k, cached.threshold, cached.metrics, edges))
    }
}

/// Thresholds a similarity matrix: an edge exists iff `s_ij >= threshold`.
pub fn build_graph(sim: &SimilarityMatrix, threshold: f64, metric: SimilarityMetric) -> SimilarityGraph {
    let k = sim.k();
    let mut edges = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            let s = sim.get(i, j);
            if s >= threshold {
                edges.push(Edge { i, j, s });
            }
        }
    }
    SimilarityGraph::from_edges(k, threshold, vec![metric], edges)
}

/// Possibly overlapping candidate groups.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    groups: Vec<Vec<usize>>,
    /// Group ids per candidate, sorted.
    membership: Vec<Vec<usize>>,
}

impl ClusterAssignment {
    pub fn from_groups(k: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut membership = vec![Vec::new(); k];
        let mut clean = Vec::with_capacity(groups.len());
        for (g, group) in groups.into_iter().enumerate() {
            let members: BTreeSet<usize> = group.into_iter().collect();
            for &m in &members {
                if m >= k {
                    return Err(Error::IndexOutOfRange { index: m, k });
                }
                membership[m].push(g);
            }
            clean.push(members.into_iter().collect());
        }
        if let Some(orphan) = membership.iter().position(Vec::is_empty) {
            return Err(Error::invalid(format!("candidate {} belongs to no group", orphan + 1)));
        }
        Ok(Self { groups: clean, membership })
    }

    pub fn singletons(k: usize) -> Self {
        Self { groups: (0..k).map(|i| vec![i]).collect(), membership: (0..k).map(|i| vec![i]).collect() }
    }

    pub fn k(&self) -> usize {
        self.membership.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn groups_of(&self, i: usize) -> &[usize] {
        &self.membership[i]
    }

    pub fn share_group(&self, a: usize, b: usize) -> bool {
        let (ga, gb) = (&self.membership[a], &self.membership[b]);
        ga.iter().any(|g| gb.binary_search(g).is_ok())
    }

    /// `max(C, K_1, ..., K_C)`: the effective problem size of the regret bound.
    pub fn effective_size(&self) -> usize {
        self.groups.iter().map(Vec::len).max().unwrap_or(0).max(self.groups.len())
    }
}

/// Connected components of the graph; isolated nodes become singletons.
pub fn soft_cluster(graph: &SimilarityGraph) -> ClusterAssignment {
    let k = graph.k();
    let mut component = vec![usize::MAX; k];
    let mut groups = Vec::new();
    for start in 0..k {
        if component[start] != usize::MAX {
            continue;
        }
        let id = groups.len();
        let mut members = vec![start];
        component[start] = id;
        let mut cursor = 0;
        while cursor < members.len() {
            let node = members[cursor];
            cursor += 1;
            for &next in graph.neighbors(node) {
                if component[next] == usize::MAX {
                    component[next] = id;
                    members.push(next);
                }
            }
        }
        members.sort_unstable();
        groups.push(members);
    }
    ClusterAssignment {
        membership: component.iter().map(|&g| vec![g]).collect(),
        groups,
    }
}

/// Components plus soft membership: a candidate also joins every other
/// component holding a member whose similarity to it reaches
/// `overlap_threshold`. Useful with an overlap threshold below the graph's
/// edge threshold, where components alone would be exclusive.
pub fn soft_cluster_with_overlap(
    graph: &SimilarityGraph,
    sim: &SimilarityMatrix,
    overlap_threshold: f64,
) -> ClusterAssignment {
    let base = soft_cluster(graph);
    let mut groups = base.groups.clone();
    for i in 0..graph.k() {
        for (g, members) in base.groups.iter().enumerate() {
            if members.contains(&i) {
                continue;
            }
            let best = members.iter().map(|&m| sim.get(i, m)).fold(f64::NEG_INFINITY, f64::max);
            if best >= overlap_threshold {
                groups[g].push(i);
            }
        }
    }
    ClusterAssignment::from_groups(graph.k(), groups).expect("components cover every candidate")
}

/// Source pairs that may inform a duel between `i` and `j`.
///
/// Empty when `i` and `j` share a group. Otherwise every `(m, n)` with `m` in
/// one of `i`'s groups and `n` in one of `j`'s, skipping `(i, j)` itself and
/// pairs whose members share a group. `valid` can veto further pairs (for
/// example, pairs spanning two context pools).
pub fn candidate_related_pairs<F>(
    clusters: &ClusterAssignment,
    i: usize,
    j: usize,
    mut valid: F,
) -> Vec<(usize, usize)>
where
    F: FnMut(usize, usize) -> bool,
{
    if i == j || clusters.share_group(i, j) {
        return Vec::new();
    }
    let side = |a: usize| -> BTreeSet<usize> {
        clusters.groups_of(a).iter().flat_map(|&g| clusters.groups()[g].iter().copied()).collect()
    };
    let (left, right) = (side(i), side(j));
    let mut out = Vec::new();
    for &m in &left {
        for &n in &right {
            if m == n || (m, n) == (i, j) || clusters.share_group(m, n) || !valid(m, n) {
                continue;
            }
            out.push((m, n));
        }
    }
    out
}
