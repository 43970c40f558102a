use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::check_index;
use crate::{Error, Result};

/// Tolerance for `p_ij + p_ji = 1` and `p_ii = 0.5` on strict construction.
pub const COMPLEMENT_TOLERANCE: f64 = 1e-9;
/// Loaders silently repair complement violations up to this size.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-6;

/// Dense K x K matrix of pairwise win probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct PreferenceMatrix {
    k: usize,
    p: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for PreferenceMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        PreferenceMatrix::from_rows(rows)
    }
}

impl From<PreferenceMatrix> for Vec<Vec<f64>> {
    fn from(m: PreferenceMatrix) -> Self {
        m.rows()
    }
}

impl PreferenceMatrix {
    /// Strict constructor: complement and diagonal must hold within 1e-9.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = Self::flatten(rows)?;
        m.validate(COMPLEMENT_TOLERANCE)?;
        Ok(m)
    }

    /// Loader constructor: pairs off by at most 1e-6 are rescaled so that the
    /// complement holds exactly; larger violations are rejected.
    pub fn from_rows_lenient(rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut m = Self::flatten(rows)?;
        m.validate(RENORMALIZE_TOLERANCE)?;
        let k = m.k;
        for i in 0..k {
            m.p[i * k + i] = 0.5;
            for j in (i + 1)..k {
                let sum = m.p[i * k + j] + m.p[j * k + i];
                let pij = m.p[i * k + j] / sum;
                m.p[i * k + j] = pij;
                m.p[j * k + i] = 1.0 - pij;
            }
        }
        Ok(m)
    }

    /// Builds a matrix from the strict upper triangle; the lower triangle is
    /// filled with exact complements.
    pub fn from_upper<F>(k: usize, mut upper: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> f64,
    {
        if k < 2 {
            return Err(Error::InvalidMatrix(format!("need K >= 2, got {k}")));
        }
        let mut p = vec![0.5; k * k];
        for i in 0..k {
            for j in (i + 1)..k {
                let pij = upper(i, j);
                if !(0.0..=1.0).contains(&pij) {
                    return Err(Error::InvalidMatrix(format!(
                        "p[{}][{}] = {pij} outside [0, 1]",
                        i + 1,
                        j + 1
                    )));
                }
                p[i * k + j] = pij;
                p[j * k + i] = 1.0 - pij;
            }
        }
        Ok(Self { k, p })
    }

    fn flatten(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k < 2 {
            return Err(Error::InvalidMatrix(format!("need K >= 2, got {k}")));
        }
        let mut p = Vec::with_capacity(k * k);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidMatrix(format!(
                    "row {} has {} entries, expected {k}",
                    i + 1,
                    row.len()
                )));
            }
            p.extend(row);
        }
        Ok(Self { k, p })
    }

    fn validate(&self, tol: f64) -> Result<()> {
        let k = self.k;
        for i in 0..k {
            for j in 0..k {
                let pij = self.p[i * k + j];
                if !pij.is_finite() || !(0.0..=1.0).contains(&pij) {
                    return Err(Error::InvalidMatrix(format!(
                        "p[{}][{}] = {pij} outside [0, 1]",
                        i + 1,
                        j + 1
                    )));
                }
            }
            if (self.p[i * k + i] - 0.5).abs() > tol {
                return Err(Error::InvalidMatrix(format!(
                    "diagonal p[{0}][{0}] = {1} is not 0.5",
                    i + 1,
                    self.p[i * k + i]
                )));
            }
            for j in (i + 1)..k {
                let sum = self.p[i * k + j] + self.p[j * k + i];
                if (sum - 1.0).abs() > tol {
                    return Err(Error::InvalidMatrix(format!(
                        "p[{0}][{1}] + p[{1}][{0}] = {sum}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.k + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.p.chunks(self.k).map(<[f64]>::to_vec).collect()
    }

    /// Reads K rows of K decimals; a non-numeric first row is treated as a header.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for (line, record) in csv.records().enumerate() {
            let record = record?;
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(row) => rows.push(row),
                Err(_) if line == 0 => continue,
                Err(_) => {
                    return Err(Error::data(format!(
                        "preference CSV line {} is not numeric",
                        line + 1
                    )))
                }
            }
        }
        Self::from_rows_lenient(rows)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for row in self.p.chunks(self.k) {
            csv.write_record(row.iter().map(|x| x.to_string()))?;
        }
        csv.flush()?;
        Ok(())
    }

    /// Gap of every arm to the given winner: `p[winner][k] - 1/2`.
    pub fn gaps(&self, winner: usize) -> Vec<f64> {
        (0..self.k)
            .map(|j| if j == winner { 0.0 } else { self.get(winner, j) - 0.5 })
            .collect()
    }
}

/// The arm beating every other arm with probability strictly above 1/2.
pub fn find_condorcet_winner(p: &PreferenceMatrix) -> Option<usize> {
    let k = p.k();
    (0..k).find(|&i| (0..k).all(|j| j == i || p.get(i, j) > 0.5))
}

/// Observed direct wins: `b[i][j]` counts duels where `i` beat `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinningMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl WinningMatrix {
    pub fn new(k: usize) -> Self {
        Self { k, counts: vec![0; k * k] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn wins(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.k + j]
    }

    /// Direct comparisons between `i` and `j` in either direction.
    #[inline]
    pub fn direct(&self, i: usize, j: usize) -> u64 {
        self.wins(i, j) + self.wins(j, i)
    }

    pub fn record(&mut self, winner: usize, loser: usize) -> Result<()> {
        check_index(winner, self.k)?;
        check_index(loser, self.k)?;
        if winner == loser {
            return Err(Error::SelfDuel(winner));
        }
        self.counts[winner * self.k + loser] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k).map(<[u64]>::to_vec).collect()
    }
}
