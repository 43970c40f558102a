use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::engine::RoundEvent;
use crate::{Error, Result};

/// How evenly queries spread over unordered pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub total: u64,
    pub unique_pairs: u64,
    /// Shannon entropy of the pair frequencies, in bits.
    pub entropy_bits: f64,
    /// `entropy_bits / log2(unique_pairs)`; 1 when a single pair was queried.
    pub normalized_entropy: f64,
    /// Query frequency to the number of pairs queried that often.
    pub histogram: BTreeMap<u64, u64>,
}

/// Entropy of a pair-frequency histogram. Terms are summed in increasing
/// frequency so the value depends only on the histogram.
pub fn entropy_bits(histogram: &BTreeMap<u64, u64>, total: u64) -> f64 {
    let n = total as f64;
    histogram
        .iter()
        .map(|(&freq, &pairs)| {
            let q = freq as f64 / n;
            -(pairs as f64) * q * q.log2()
        })
        .sum::<f64>()
        .max(0.0)
}

impl QueryStats {
    /// Statistics of a frequency histogram.
    pub fn from_histogram(histogram: BTreeMap<u64, u64>) -> Result<Self> {
        if histogram.iter().any(|(&f, &c)| f == 0 || c == 0) {
            return Err(Error::invalid("histogram entries must be positive"));
        }
        let total: u64 = histogram.iter().map(|(f, c)| f * c).sum();
        let unique: u64 = histogram.values().sum();
        if total == 0 {
            return Err(Error::invalid("query statistics need at least one query"));
        }
        let entropy = entropy_bits(&histogram, total);
        let normalized = if unique < 2 { 1.0 } else { entropy / (unique as f64).log2() };
        Ok(Self { total, unique_pairs: unique, entropy_bits: entropy, normalized_entropy: normalized, histogram })
    }

    /// Statistics of per-pair query counts.
    pub fn from_counts(counts: impl IntoIterator<Item = u64>) -> Result<Self> {
        let mut histogram = BTreeMap::new();
        for c in counts.into_iter().filter(|&c| c > 0) {
            *histogram.entry(c).or_insert(0) += 1;
        }
        Self::from_histogram(histogram)
    }
}

/// Query statistics over unordered pairs of a log.
pub fn query_stats(events: &[RoundEvent]) -> Result<QueryStats> {
    query_stats_of_pairs(events.iter().map(RoundEvent::unordered_pair))
}

pub fn query_stats_of_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<QueryStats> {
    let mut counts: HashMap<(usize, usize), u64> = HashMap::new();
    for (a, b) in pairs {
        *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
    }
    QueryStats::from_counts(counts.into_values())
}
