use serde::{Deserialize, Serialize};

use super::{check_index, find_condorcet_winner, PreferenceMatrix};
use crate::{Error, Result};

/// Regret accounting against a known Condorcet winner.
///
/// Each duel `(i, j)` costs `(gap_i + gap_j) / 2` where `gap_k = p[*][k] - 1/2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    winner: usize,
    gaps: Vec<f64>,
    regrets: Vec<f64>,
    cumulative: f64,
}

impl RegretLedger {
    pub fn new(p: &PreferenceMatrix) -> Result<Self> {
        let winner = find_condorcet_winner(p)
            .ok_or_else(|| Error::invalid("regret needs a Condorcet winner"))?;
        Ok(Self::with_winner(p, winner))
    }

    fn with_winner(p: &PreferenceMatrix, winner: usize) -> Self {
        Self { winner, gaps: p.gaps(winner), regrets: Vec::new(), cumulative: 0.0 }
    }

    pub fn winner(&self) -> usize {
        self.winner
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    /// Regret of one duel, without recording it.
    pub fn regret_of(&self, i: usize, j: usize) -> Result<f64> {
        check_index(i, self.gaps.len())?;
        check_index(j, self.gaps.len())?;
        Ok((self.gaps[i] + self.gaps[j]) / 2.0)
    }

    /// Records the regret of duel `(i, j)` and returns it.
    pub fn record(&mut self, i: usize, j: usize) -> Result<f64> {
        let r = self.regret_of(i, j)?;
        self.regrets.push(r);
        self.cumulative += r;
        Ok(r)
    }

    pub fn regrets(&self) -> &[f64] {
        &self.regrets
    }

    /// `R(T)` for the rounds recorded so far.
    pub fn cumulative(&self) -> f64 {
        self.cumulative
    }

    /// Running sums `R(1), ..., R(T)`.
    pub fn trajectory(&self) -> Vec<f64> {
        self.regrets
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r;
                Some(*acc)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ledger_with_gaps(gaps: &[f64]) -> RegretLedger {
        // Arm 0 is the winner; p[0][j] = 1/2 + gap_j.
        let p = PreferenceMatrix::from_upper(gaps.len(), |i, j| {
            if i == 0 {
                0.5 + gaps[j]
            } else {
                0.5
            }
        })
        .unwrap();
        RegretLedger::new(&p).unwrap()
    }

    #[test]
    fn instantaneous_regret_examples() {
        let mut ledger = ledger_with_gaps(&[0.0, 0.2, 0.1, 0.3]);
        assert_eq!(ledger.record(0, 0).unwrap(), 0.0);
        assert!((ledger.record(1, 2).unwrap() - 0.15).abs() < 1e-12);
        assert!((ledger.record(3, 3).unwrap() - 0.3).abs() < 1e-12);
        assert!(ledger.record(0, 4).is_err());
        assert_eq!(ledger.regrets().len(), 3);
        let traj = ledger.trajectory();
        assert!((traj[2] - ledger.cumulative()).abs() < 1e-15);
    }

    #[test]
    fn needs_condorcet_winner() {
        let cycle = PreferenceMatrix::from_upper(3, |i, j| match (i, j) {
            (0, 1) => 0.6,
            (0, 2) => 0.4,
            _ => 0.6,
        })
        .unwrap();
        assert!(RegretLedger::new(&cycle).is_err());
    }
}
