//! Confidence-bound mathematics.
//!
//! Two estimators share one output type:
//!
//! * [`context_free_bound`] uses only direct duels between `i` and `j`:
//!   `mean = b_ij / n`, `radius = sqrt(alpha ln t / n)`.
//! * [`augmented_bound`] also folds in related observations imported from
//!   other pairs, each carrying a dependency weight `w`. With `n` the total
//!   (direct + related) count and `eta = (n_d + sum w cnt) / n`, it uses
//!   `mean = (b_ij + sum X) / (eta n)` and `radius = sqrt(alpha ln t / n) / eta`.
//!
//! A pair with a zero denominator (never observed, or only zero-weight
//! evidence) gets `mean = 1` and `radius = 1`, so its upper bound is 2.
//! Bounds are never clipped here; see [`BoundEstimate::clipped`].

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Mean and radius used whenever a bound's denominator is zero.
pub const UNOBSERVED_VALUE: f64 = 1.0;

/// Outcomes of one source pair `(m, n)` imported as evidence for a target
/// pair `(i, j)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelatedEvidence {
    pub source: (usize, usize),
    /// Source outcomes counted toward `i` beating `j` (that is, `b_mn`).
    pub wins: u64,
    /// All source outcomes (`b_mn + b_nm`).
    pub count: u64,
    pub weight: f64,
}

impl RelatedEvidence {
    pub fn new(source: (usize, usize), wins: u64, count: u64, weight: f64) -> Result<Self> {
        let e = Self { source, wins, count, weight };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if self.wins > self.count {
            return Err(Error::invalid(format!(
                "evidence wins {} exceed count {}",
                self.wins, self.count
            )));
        }
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(Error::invalid(format!(
                "dependency weight {} outside [0, 1]",
                self.weight
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimate {
    pub mean: f64,
    pub upper: f64,
    pub lower: f64,
    pub n_direct: u64,
    pub n_related: u64,
    pub eta: f64,
    pub alpha: f64,
    pub round: u64,
}

impl BoundEstimate {
    /// Estimate for a candidate against itself.
    pub fn diagonal(alpha: f64, round: u64) -> Self {
        Self {
            mean: 0.5,
            upper: 0.5,
            lower: 0.5,
            n_direct: 0,
            n_related: 0,
            eta: 1.0,
            alpha,
            round,
        }
    }

    pub fn radius(&self) -> f64 {
        self.upper - self.mean
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Total observation count `n = n_direct + n_related`.
    pub fn n_total(&self) -> u64 {
        self.n_direct + self.n_related
    }

    /// `(mean, upper, lower)` clipped to `[0, 1]`, for display only.
    pub fn clipped(&self) -> (f64, f64, f64) {
        (
            self.mean.clamp(0.0, 1.0),
            self.upper.clamp(0.0, 1.0),
            self.lower.clamp(0.0, 1.0),
        )
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }
}

fn check_params(alpha: f64, round: u64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    if round == 0 {
        return Err(Error::invalid("round t must be at least 1"));
    }
    Ok(())
}

fn estimate(
    mean: f64,
    radius: f64,
    n_direct: u64,
    n_related: u64,
    eta: f64,
    alpha: f64,
    round: u64,
) -> BoundEstimate {
    BoundEstimate {
        mean,
        upper: mean + radius,
        lower: mean - radius,
        n_direct,
        n_related,
        eta,
        alpha,
        round,
    }
}

/// Bound from direct duels only.
pub fn context_free_bound(wins: u64, losses: u64, alpha: f64, round: u64) -> Result<BoundEstimate> {
    check_params(alpha, round)?;
    let n = wins + losses;
    if n == 0 {
        return Ok(estimate(UNOBSERVED_VALUE, UNOBSERVED_VALUE, 0, 0, 1.0, alpha, round));
    }
    let nf = n as f64;
    let mean = wins as f64 / nf;
    let radius = (alpha * (round as f64).ln() / nf).sqrt();
    Ok(estimate(mean, radius, n, 0, 1.0, alpha, round))
}

/// Bound from direct duels plus weighted related observations.
///
/// Evidence is summed over all source pairs before `eta` is formed. With no
/// evidence the result is bit-identical to [`context_free_bound`].
pub fn augmented_bound(
    wins: u64,
    losses: u64,
    evidence: &[RelatedEvidence],
    alpha: f64,
    round: u64,
) -> Result<BoundEstimate> {
    check_params(alpha, round)?;
    let n_direct = wins + losses;
    let mut n_related = 0u64;
    let mut related_wins = 0u64;
    let mut weighted = 0.0f64;
    for e in evidence {
        e.validate()?;
        n_related += e.count;
        related_wins += e.wins;
        weighted += e.weight * e.count as f64;
    }
    let n_total = n_direct + n_related;
    // eta * n = n_d + sum(w * cnt)
    let effective = n_direct as f64 + weighted;
    if n_total == 0 || effective == 0.0 {
        let eta = if n_total == 0 { 1.0 } else { 0.0 };
        return Ok(estimate(
            UNOBSERVED_VALUE,
            UNOBSERVED_VALUE,
            n_direct,
            n_related,
            eta,
            alpha,
            round,
        ));
    }
    let n = n_total as f64;
    let eta = effective / n;
    let mean = (wins + related_wins) as f64 / (eta * n);
    let radius = (alpha * (round as f64).ln() / n).sqrt() / eta;
    Ok(estimate(mean, radius, n_direct, n_related, eta, alpha, round))
}

/// Width ratio after adding one related observation of weight `w` to `n_d`
/// direct observations: `sqrt(n_d (n_d + 1)) / (n_d + w)`.
///
/// Always lies in `[sqrt(1 - 1/(n_d+1)), sqrt(1 + 1/n_d)]`, hitting the lower
/// end at `w = 1` and the upper end at `w = 0`.
pub fn interval_ratio(n_direct: u64, weight: f64) -> Result<f64> {
    if n_direct == 0 {
        return Err(Error::invalid("interval ratio needs at least one direct observation"));
    }
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::invalid(format!("weight {weight} outside [0, 1]")));
    }
    let n = n_direct as f64;
    Ok((n * (n + 1.0)).sqrt() / (n + weight))
}

/// Smallest weight at which one more related observation narrows the
/// interval: `theta (sqrt(1 + 1/n) - 1)` with `theta = eta n`.
pub fn calibration_threshold(n_direct: u64, evidence: &[RelatedEvidence]) -> Result<f64> {
    let mut n = n_direct;
    let mut theta = n_direct as f64;
    for e in evidence {
        e.validate()?;
        n += e.count;
        theta += e.weight * e.count as f64;
    }
    if n == 0 {
        return Err(Error::invalid("calibration threshold needs at least one observation"));
    }
    let inv = 1.0 / n as f64;
    // sqrt(1 + x) - 1 == x / (sqrt(1 + x) + 1), stable for large n.
    Ok(theta * inv / ((1.0 + inv).sqrt() + 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    /// Round after which all bounds hold with probability `1 - delta`.
    pub concentration_time: f64,
    /// Per-pair sample-complexity coefficient on `ln T`.
    pub dependency_factor: f64,
}

/// `C(delta) = ((4 alpha - 1) K^2 / ((2 alpha - 1) delta))^(1 / (2 alpha - 1))`.
pub fn concentration_time(k: usize, alpha: f64, delta: f64) -> Result<f64> {
    if !(alpha > 0.5) {
        return Err(Error::DegenerateConstant(format!(
            "C(delta) needs alpha > 0.5, got {alpha}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(concentration_time_formula(k, alpha, delta))
}

pub(crate) fn concentration_time_formula(k: usize, alpha: f64, delta: f64) -> f64 {
    let k2 = (k * k) as f64;
    ((4.0 * alpha - 1.0) * k2 / ((2.0 * alpha - 1.0) * delta)).powf(1.0 / (2.0 * alpha - 1.0))
}

/// `D^w = 4 alpha / (w_min^2 min(gap_i^2, gap_j^2))`.
pub fn dependency_factor(alpha: f64, w_min: f64, gap_i: f64, gap_j: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    if !(w_min > 0.0 && w_min <= 1.0) {
        return Err(Error::DegenerateConstant(format!(
            "D^w diverges for minimum weight {w_min}"
        )));
    }
    let gap = (gap_i * gap_i).min(gap_j * gap_j);
    if !(gap > 0.0) {
        return Err(Error::DegenerateConstant("D^w diverges for a zero gap".into()));
    }
    Ok(4.0 * alpha / (w_min * w_min * gap))
}

pub fn theory_constants(
    k: usize,
    alpha: f64,
    delta: f64,
    w_min: f64,
    gap_i: f64,
    gap_j: f64,
) -> Result<TheoryConstants> {
    Ok(TheoryConstants {
        concentration_time: concentration_time(k, alpha, delta)?,
        dependency_factor: dependency_factor(alpha, w_min, gap_i, gap_j)?,
    })
}
