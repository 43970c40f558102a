use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::bounds::BoundEstimate;

/// Bounds for every ordered pair inside one arm subset.
///
/// Rows and columns are local positions into `arms`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundMatrix {
    arms: Vec<usize>,
    estimates: Vec<BoundEstimate>,
    /// Augmented pseudo-counts `(a_ij, a_ji)` per ordered pair.
    pseudo: Vec<(f64, f64)>,
}

impl BoundMatrix {
    pub(crate) fn new(arms: Vec<usize>, estimates: Vec<BoundEstimate>, pseudo: Vec<(f64, f64)>) -> Self {
        debug_assert_eq!(estimates.len(), arms.len() * arms.len());
        Self { arms, estimates, pseudo }
    }

    /// Builds a matrix from raw estimates; pseudo-counts default to zero.
    pub fn from_estimates(arms: Vec<usize>, estimates: Vec<BoundEstimate>) -> Self {
        let pseudo = vec![(0.0, 0.0); estimates.len()];
        Self::new(arms, estimates, pseudo)
    }

    pub fn arms(&self) -> &[usize] {
        &self.arms
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> &BoundEstimate {
        &self.estimates[a * self.arms.len() + b]
    }

    #[inline]
    pub fn upper(&self, a: usize, b: usize) -> f64 {
        self.get(a, b).upper
    }

    #[inline]
    pub fn lower(&self, a: usize, b: usize) -> f64 {
        self.get(a, b).lower
    }

    #[inline]
    pub fn pseudo_counts(&self, a: usize, b: usize) -> (f64, f64) {
        self.pseudo[a * self.arms.len() + b]
    }

    /// Position of a global candidate index, if it belongs to this subset.
    pub fn local(&self, global: usize) -> Option<usize> {
        self.arms.iter().position(|&a| a == global)
    }

    /// `#{j != a : u_aj >= 1/2}`.
    pub fn upper_copeland(&self, a: usize) -> usize {
        (0..self.len()).filter(|&b| b != a && self.upper(a, b) >= 0.5).count()
    }
}

/// A selected duel with the quantities that decided it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuelChoice {
    pub champion: usize,
    pub challenger: usize,
    /// Arms the champion was drawn from (the optimistic set for RUCB, the
    /// Copeland-restricted set for DTS).
    pub pool: Vec<usize>,
    /// `u_{challenger, champion}` at selection time.
    pub challenger_upper: f64,
}

pub(crate) fn uniform<R: Rng + ?Sized, T: Copy>(rng: &mut R, items: &[T]) -> T {
    items[rng.random_range(0..items.len())]
}

/// Uniform choice among the maximisers of `score`.
fn argmax_uniform<R, F>(rng: &mut R, candidates: impl Iterator<Item = usize>, mut score: F) -> usize
where
    R: Rng + ?Sized,
    F: FnMut(usize) -> f64,
{
    let mut best = f64::NEG_INFINITY;
    let mut ties = Vec::new();
    for c in candidates {
        let s = score(c);
        if s > best {
            best = s;
            ties.clear();
            ties.push(c);
        } else if s == best {
            ties.push(c);
        }
    }
    uniform(rng, &ties)
}

/// RUCB selection over local positions.
///
/// `hypothesis` is the hypothesised champion (local position), updated in
/// place: it is intersected with the optimistic set and replaced when that set
/// is a singleton.
pub fn rucb_select<R: Rng + ?Sized>(
    bounds: &BoundMatrix,
    hypothesis: &mut Option<usize>,
    rng: &mut R,
) -> DuelChoice {
    let k = bounds.len();
    assert!(k >= 2, "selection needs at least two arms");
    let mut optimistic: Vec<usize> = (0..k)
        .filter(|&c| (0..k).all(|j| j == c || bounds.upper(c, j) >= 0.5))
        .collect();
    if optimistic.is_empty() {
        optimistic.push(rng.random_range(0..k));
    }
    if hypothesis.is_some_and(|b| !optimistic.contains(&b)) {
        *hypothesis = None;
    }
    if optimistic.len() == 1 {
        *hypothesis = Some(optimistic[0]);
    }
    let champion = match *hypothesis {
        Some(b) => {
            let others: Vec<usize> = optimistic.iter().copied().filter(|&c| c != b).collect();
            if others.is_empty() || rng.random_bool(0.5) {
                b
            } else {
                uniform(rng, &others)
            }
        }
        None => uniform(rng, &optimistic),
    };
    let challenger = argmax_uniform(rng, (0..k).filter(|&j| j != champion), |j| bounds.upper(j, champion));
    DuelChoice {
        champion,
        challenger,
        pool: optimistic,
        challenger_upper: bounds.upper(challenger, champion),
    }
}

fn beta_sample<R: Rng + ?Sized>(rng: &mut R, (a, b): (f64, f64)) -> f64 {
    Beta::new(a + 1.0, b + 1.0)
        .expect("pseudo-counts are non-negative")
        .sample(rng)
}

/// Double Thompson sampling over local positions.
pub fn dts_select<R: Rng + ?Sized>(bounds: &BoundMatrix, rng: &mut R) -> DuelChoice {
    let k = bounds.len();
    assert!(k >= 2, "selection needs at least two arms");
    let copeland: Vec<usize> = (0..k).map(|a| bounds.upper_copeland(a)).collect();
    let top = *copeland.iter().max().expect("non-empty");
    let restricted: Vec<usize> = (0..k).filter(|&a| copeland[a] == top).collect();

    // theta[a][b] for a < b, theta[b][a] = 1 - theta[a][b]; only pairs touching
    // the restricted set matter.
    let in_restricted = {
        let mut mask = vec![false; k];
        for &a in &restricted {
            mask[a] = true;
        }
        mask
    };
    let mut majority = vec![0usize; k];
    for a in 0..k {
        for b in (a + 1)..k {
            if !(in_restricted[a] || in_restricted[b]) {
                continue;
            }
            let theta = beta_sample(rng, bounds.pseudo_counts(a, b));
            if theta > 0.5 {
                majority[a] += 1;
            } else if theta < 0.5 {
                majority[b] += 1;
            }
        }
    }
    let champion = argmax_uniform(rng, restricted.iter().copied(), |a| majority[a] as f64);

    let mut contenders: Vec<usize> = (0..k)
        .filter(|&j| j != champion && bounds.lower(j, champion) <= 0.5)
        .collect();
    if contenders.is_empty() {
        contenders = (0..k).filter(|&j| j != champion).collect();
    }
    let samples: Vec<(usize, f64)> = contenders
        .iter()
        .map(|&j| (j, beta_sample(rng, bounds.pseudo_counts(j, champion))))
        .collect();
    let challenger = argmax_uniform(rng, 0..samples.len(), |s| samples[s].1);
    let challenger = samples[challenger].0;
    DuelChoice {
        champion,
        challenger,
        pool: restricted,
        challenger_upper: bounds.upper(challenger, champion),
    }
}
