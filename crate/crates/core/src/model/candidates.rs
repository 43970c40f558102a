use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::FeatureTable;
use crate::{Error, Result};

/// The arms of a dueling-bandit problem: display labels plus optional
/// context features, one row per candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCandidateSet")]
pub struct CandidateSet {
    labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<FeatureTable>,
}

#[derive(Deserialize)]
struct RawCandidateSet {
    labels: Vec<String>,
    #[serde(default)]
    features: Option<FeatureTable>,
}

impl TryFrom<RawCandidateSet> for CandidateSet {
    type Error = Error;

    fn try_from(raw: RawCandidateSet) -> Result<Self> {
        CandidateSet::new(raw.labels, raw.features)
    }
}

impl CandidateSet {
    pub fn new(labels: Vec<String>, features: Option<FeatureTable>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 candidates, got {}",
                labels.len()
            )));
        }
        let mut seen = HashSet::with_capacity(labels.len());
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(Error::invalid(format!("duplicate candidate label `{label}`")));
            }
        }
        if let Some(table) = &features {
            if table.len() != labels.len() {
                return Err(Error::invalid(format!(
                    "feature table has {} rows for {} candidates",
                    table.len(),
                    labels.len()
                )));
            }
        }
        Ok(Self { labels, features })
    }

    /// Candidates labelled `1..=k`.
    pub fn numbered(k: usize) -> Result<Self> {
        Self::new((1..=k).map(|i| i.to_string()).collect(), None)
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn features(&self) -> Option<&FeatureTable> {
        self.features.as_ref()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enforces_invariants() {
        assert!(CandidateSet::numbered(1).is_err());
        assert!(CandidateSet::new(vec!["a".into(), "a".into()], None).is_err());
        let table = FeatureTable::from_numeric_rows("x", &[vec![1.0]]).unwrap();
        assert!(CandidateSet::new(vec!["a".into(), "b".into()], Some(table)).is_err());
        let ok = CandidateSet::numbered(3).unwrap();
        assert_eq!(ok.k(), 3);
        assert_eq!(ok.position("2"), Some(1));
    }
}
