use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bounds::RelatedEvidence;
use crate::{Error, Result, WinningMatrix};

/// Entries weaker than this are dropped on insertion.
pub const DEFAULT_W_FLOOR: f64 = 0.05;

/// Where a dependency weight came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Oracle,
    Constant,
    Noisy,
    External,
    Manual,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Oracle => "oracle",
            Provenance::Constant => "constant",
            Provenance::Noisy => "noisy",
            Provenance::External => "external",
            Provenance::Manual => "manual",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "oracle" => Provenance::Oracle,
            "constant" => Provenance::Constant,
            "noisy" => Provenance::Noisy,
            "external" => Provenance::External,
            "manual" => Provenance::Manual,
            other => return Err(Error::invalid(format!("unknown provenance {other:?}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DependencyEntry {
    pub weight: f64,
    pub provenance: Provenance,
}

/// One stored dependency in file form (1-based indices).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DependencyRecord {
    pub i: usize,
    pub j: usize,
    pub m: usize,
    pub n: usize,
    pub w: f64,
    pub provenance: Provenance,
}

type Entries = BTreeMap<(usize, usize), DependencyEntry>;

/// Related source pairs per target pair.
///
/// Invariants: no pair is evidence for itself, weights lie in `[w_floor, 1]`,
/// and `(i, j) <- (m, n, w)` always comes with `(j, i) <- (n, m, w)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DependencyStore {
    k: usize,
    w_floor: f64,
    map: BTreeMap<(usize, usize), Entries>,
}

impl DependencyStore {
    pub fn new(k: usize) -> Self {
        Self::with_floor(k, DEFAULT_W_FLOOR)
    }

    pub fn with_floor(k: usize, w_floor: f64) -> Self {
        Self { k, w_floor, map: BTreeMap::new() }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn w_floor(&self) -> f64 {
        self.w_floor
    }

    fn check_pair(&self, a: usize, b: usize) -> Result<()> {
        for x in [a, b] {
            if x >= self.k {
                return Err(Error::IndexOutOfRange { index: x, k: self.k });
            }
        }
        if a == b {
            return Err(Error::SelfDuel(a));
        }
        Ok(())
    }

    /// Adds `(m, n, w)` as evidence for `(i, j)` and its mirror.
    ///
    /// Returns `Ok(false)` when the entry was filtered out (weight below the
    /// floor) or ignored (an existing manual entry outranks it).
    pub fn insert(
        &mut self,
        target: (usize, usize),
        source: (usize, usize),
        weight: f64,
        provenance: Provenance,
    ) -> Result<bool> {
        let ((i, j), (m, n)) = (target, source);
        self.check_pair(i, j)?;
        self.check_pair(m, n)?;
        if (m, n) == (i, j) {
            return Err(Error::invalid(format!(
                "pair ({}, {}) cannot be evidence for itself",
                i + 1,
                j + 1
            )));
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::invalid(format!("dependency weight {weight} outside [0, 1]")));
        }
        if weight < self.w_floor {
            return Ok(false);
        }
        if let Some(old) = self.get(target, source) {
            if old.provenance == Provenance::Manual && provenance != Provenance::Manual {
                return Ok(false);
            }
        }
        let entry = DependencyEntry { weight, provenance };
        self.map.entry((i, j)).or_default().insert((m, n), entry);
        self.map.entry((j, i)).or_default().insert((n, m), entry);
        Ok(true)
    }

    pub fn get(&self, target: (usize, usize), source: (usize, usize)) -> Option<DependencyEntry> {
        self.map.get(&target).and_then(|e| e.get(&source)).copied()
    }

    /// Sources recorded for `(i, j)`, ordered by source pair.
    pub fn entries(&self, i: usize, j: usize) -> impl Iterator<Item = ((usize, usize), DependencyEntry)> + '_ {
        self.map.get(&(i, j)).into_iter().flat_map(|e| e.iter().map(|(s, d)| (*s, *d)))
    }

    pub fn entry_count(&self, i: usize, j: usize) -> usize {
        self.map.get(&(i, j)).map_or(0, BTreeMap::len)
    }

    /// Entries over all ordered targets (each mirror counted separately).
    pub fn total_entries(&self) -> usize {
        self.map.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Related evidence for `(i, j)` under the current winning matrix:
    /// source `(m, n)` contributes `b_mn` wins out of `b_mn + b_nm`.
    /// Sources never observed are skipped.
    pub fn evidence(&self, i: usize, j: usize, b: &WinningMatrix) -> Vec<RelatedEvidence> {
        self.entries(i, j)
            .filter_map(|((m, n), e)| {
                let count = b.direct(m, n);
                (count > 0).then(|| RelatedEvidence {
                    source: (m, n),
                    wins: b.wins(m, n),
                    count,
                    weight: e.weight,
                })
            })
            .collect()
    }

    /// Smallest stored weight, if any.
    pub fn min_weight(&self) -> Option<f64> {
        self.map.values().flat_map(|e| e.values().map(|d| d.weight)).reduce(f64::min)
    }

    /// All entries with `i < j` (mirrors implied), 1-based.
    pub fn records(&self) -> Vec<DependencyRecord> {
        let mut out = Vec::new();
        for (&(i, j), entries) in &self.map {
            if i > j {
                continue;
            }
            for (&(m, n), e) in entries {
                out.push(DependencyRecord {
                    i: i + 1,
                    j: j + 1,
                    m: m + 1,
                    n: n + 1,
                    w: e.weight,
                    provenance: e.provenance,
                });
            }
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<()> {
        for r in self.records() {
            serde_json::to_writer(&mut writer, &r)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(k: usize, w_floor: f64, reader: R) -> Result<Self> {
        let mut store = Self::with_floor(k, w_floor);
        for (line_no, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: DependencyRecord = serde_json::from_str(&line)?;
            if [r.i, r.j, r.m, r.n].contains(&0) {
                return Err(Error::data(format!("line {}: indices are 1-based", line_no + 1)));
            }
            store
                .insert((r.i - 1, r.j - 1), (r.m - 1, r.n - 1), r.w, r.provenance)
                .map_err(|e| Error::data(format!("line {}: {e}", line_no + 1)))?;
        }
        Ok(store)
    }

    /// True when every entry has its mirror with the same weight.
    pub fn is_mirror_consistent(&self) -> bool {
        self.map.iter().all(|(&(i, j), entries)| {
            entries
                .iter()
                .all(|(&(m, n), e)| self.get((j, i), (n, m)) == Some(*e))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn augment_examples() {
        let mut s = DependencyStore::new(4);
        assert!(s.insert((0, 1), (2, 3), 0.7, Provenance::Oracle).unwrap());
        assert_eq!(s.get((1, 0), (3, 2)).unwrap().weight, 0.7);
        assert!(s.insert((0, 1), (0, 1), 0.5, Provenance::Oracle).is_err());
        assert!(!s.insert((0, 1), (2, 1), 0.01, Provenance::Oracle).unwrap());
        assert_eq!(s.entry_count(0, 1), 1);
        assert_eq!(s.total_entries(), 2);
    }

    #[test]
    fn manual_wins_on_conflict() {
        let mut s = DependencyStore::new(3);
        s.insert((0, 1), (2, 1), 0.9, Provenance::Manual).unwrap();
        assert!(!s.insert((0, 1), (2, 1), 0.2, Provenance::External).unwrap());
        assert_eq!(s.get((0, 1), (2, 1)).unwrap().weight, 0.9);
        assert!(s.insert((0, 1), (2, 1), 0.4, Provenance::Manual).unwrap());
        assert_eq!(s.get((1, 0), (1, 2)).unwrap().weight, 0.4);
    }

    #[test]
    fn evidence_reads_source_counts() {
        let mut s = DependencyStore::new(4);
        s.insert((0, 1), (2, 3), 0.5, Provenance::Constant).unwrap();
        let mut b = WinningMatrix::new(4);
        assert!(s.evidence(0, 1, &b).is_empty());
        for _ in 0..3 {
            b.record(2, 3).unwrap();
        }
        b.record(3, 2).unwrap();
        let ev = s.evidence(0, 1, &b);
        assert_eq!((ev[0].wins, ev[0].count, ev[0].weight), (3, 4, 0.5));
        let mirror = s.evidence(1, 0, &b);
        assert_eq!((mirror[0].wins, mirror[0].count), (1, 4));
    }

    #[test]
    fn jsonl_round_trip() {
        let mut s = DependencyStore::new(5);
        s.insert((0, 1), (2, 3), 0.5, Provenance::Oracle).unwrap();
        s.insert((4, 1), (2, 0), 0.25, Provenance::Manual).unwrap();
        let mut buf = Vec::new();
        s.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"provenance\":\"manual\""));
        let back = DependencyStore::read_jsonl(5, DEFAULT_W_FLOOR, buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    proptest! {
        #[test]
        fn mirror_invariant_survives_any_sequence(
            ops in prop::collection::vec((0usize..6, 0usize..6, 0usize..6, 0usize..6, 0.0f64..=1.0, any::<bool>()), 0..60)
        ) {
            let mut s = DependencyStore::new(6);
            for (i, j, m, n, w, manual) in ops {
                let prov = if manual { Provenance::Manual } else { Provenance::Noisy };
                let _ = s.insert((i, j), (m, n), w, prov);
            }
            prop_assert!(s.is_mirror_consistent());
            for r in s.records() {
                prop_assert!((r.i, r.j) != (r.m, r.n));
                prop_assert!(r.w >= DEFAULT_W_FLOOR && r.w <= 1.0);
            }
        }
    }
}
