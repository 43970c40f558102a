use serde::{Deserialize, Serialize};

use crate::bounds::{concentration_time, dependency_factor};
use crate::depgraph::{candidate_related_pairs, AnnotationContext, Annotator, AnnotatorSpec, ClusterAssignment};
use crate::engine::{EngineState, RegretModel};
use crate::{Error, PreferenceMatrix, Result};

/// Sample-complexity coefficient of one pair. Indices are 1-based when
/// serialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairFactor {
    pub i: usize,
    pub j: usize,
    /// Smallest oracle weight among the pair's stored dependencies, 1 when it
    /// has none.
    pub w_min: f64,
    /// `None` when the coefficient diverges (a zero gap).
    pub dependency_factor: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub k: usize,
    pub alpha: f64,
    pub delta: f64,
    pub num_clusters: usize,
    /// `max(C, largest cluster)`.
    pub effective_cluster_size: usize,
    /// `None` when undefined for this `alpha`.
    pub concentration_time: Option<f64>,
    pub pairs: Vec<PairFactor>,
}

impl Diagnostics {
    /// Whether `n` duels of pair `(i, j)` (0-based) stay within
    /// `max(C(delta), D^w ln t)`.
    pub fn within_envelope(&self, i: usize, j: usize, n: u64, t: u64) -> bool {
        let (a, b) = (i.min(j) + 1, i.max(j) + 1);
        let Some(pair) = self.pairs.iter().find(|p| p.i == a && p.j == b) else {
            return true;
        };
        let c = self.concentration_time.unwrap_or(f64::INFINITY);
        let d = pair.dependency_factor.map_or(f64::INFINITY, |d| d * (t as f64).ln());
        (n as f64) <= c.max(d)
    }
}

/// Theory constants for an instance: `C(delta)`, the effective cluster size
/// and `D^w` for every same-context pair, using oracle weights at or above
/// `w_floor`.
pub fn theory_diagnostics(
    p: &PreferenceMatrix,
    pools: &[Vec<usize>],
    clusters: &ClusterAssignment,
    alpha: f64,
    delta: f64,
    w_floor: f64,
) -> Result<Diagnostics> {
    let k = p.k();
    let regret = RegretModel::new(p, pools)
        .ok_or_else(|| Error::invalid("diagnostics need a Condorcet winner in every context"))?;
    let mut pool_of = vec![0; k];
    for (c, arms) in pools.iter().enumerate() {
        for &a in arms {
            pool_of[a] = c;
        }
    }
    let mut oracle = Annotator::new(AnnotatorSpec::Oracle, 0)?;
    let ctx = AnnotationContext { oracle: Some(p), ..Default::default() };
    let mut pairs = Vec::new();
    for arms in pools {
        for (a, &i) in arms.iter().enumerate() {
            for &j in &arms[a + 1..] {
                let related = candidate_related_pairs(clusters, i, j, |m, n| pool_of[m] == pool_of[n]);
                let mut w_min: f64 = 1.0;
                for source in related {
                    if let Some(w) = oracle.annotate((i, j), source, &ctx)? {
                        if w >= w_floor {
                            w_min = w_min.min(w);
                        }
                    }
                }
                let gaps = regret.gaps();
                pairs.push(PairFactor {
                    i: i + 1,
                    j: j + 1,
                    w_min,
                    dependency_factor: dependency_factor(alpha, w_min, gaps[i], gaps[j]).ok(),
                });
            }
        }
    }
    Ok(Diagnostics {
        k,
        alpha,
        delta,
        num_clusters: clusters.num_groups(),
        effective_cluster_size: clusters.effective_size(),
        concentration_time: concentration_time(k, alpha, delta).ok(),
        pairs,
    })
}

/// Whether every same-context pair's interval contains the true probability.
pub fn bounds_cover_truth(state: &EngineState, p: &PreferenceMatrix) -> Result<bool> {
    for arms in state.pools() {
        for &i in arms {
            for &j in arms {
                if i != j && !state.bound(i, j)?.contains(p.get(i, j)) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gap_pairs_are_unbounded() {
        let p = PreferenceMatrix::from_rows(vec![
            vec![0.5, 0.7, 0.8],
            vec![0.3, 0.5, 0.6],
            vec![0.2, 0.4, 0.5],
        ])
        .unwrap();
        let d = theory_diagnostics(&p, &[vec![0, 1, 2]], &ClusterAssignment::singletons(3), 0.6, 0.1, 0.05).unwrap();
        assert_eq!(d.pairs.len(), 3);
        assert_eq!(d.pairs[0].dependency_factor, None);
        let f = d.pairs[2].dependency_factor.unwrap();
        assert!((f - 4.0 * 0.6 / (0.2 * 0.2)).abs() < 1e-9);
        assert!(d.concentration_time.unwrap() > 0.0);
        assert!(d.within_envelope(0, 1, u64::MAX, 10));
        assert_eq!(d.effective_cluster_size, 3);
    }
}
