//! Duel selection and the elicitation loop.
//!
//! An [`EngineState`] owns everything one run mutates: the winning matrix,
//! the dependency store, the hypothesised champions and three independent
//! random streams (selection, simulated oracle, annotator noise). A round is
//! [`EngineState::propose`] followed by [`EngineState::record`];
//! [`EngineState::run_round`] does both against a [`DuelOracle`].

mod event;
mod select;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{augmented_bound, context_free_bound, BoundEstimate};
use crate::depgraph::{
    candidate_related_pairs, AnnotationContext, Annotator, ClusterAssignment, DependencyStore,
    Provenance, DEFAULT_W_FLOOR,
};
use crate::{find_condorcet_winner, CandidateSet, Error, PreferenceMatrix, Result, WinningMatrix};

pub use event::{read_events_jsonl, write_events_jsonl, RoundEvent};
pub use select::{dts_select, rucb_select, BoundMatrix, DuelChoice};

/// Default exploration parameter.
pub const DEFAULT_ALPHA: f64 = 0.1;

const SELECTION_STREAM: u64 = 0;
const ORACLE_STREAM: u64 = 1;
const ANNOTATOR_STREAM: u64 = 2;

/// Generator for one of a run's independent random streams.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for the annotator's noise stream of a run.
pub fn annotator_seed(seed: u64) -> u64 {
    stream_rng(seed, ANNOTATOR_STREAM).random()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Rucb,
    Dts,
    IpeaRucb,
    IpeaDts,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Rucb, Algorithm::Dts, Algorithm::IpeaRucb, Algorithm::IpeaDts];

    pub fn is_augmented(self) -> bool {
        matches!(self, Algorithm::IpeaRucb | Algorithm::IpeaDts)
    }

    pub fn is_thompson(self) -> bool {
        matches!(self, Algorithm::Dts | Algorithm::IpeaDts)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Rucb => "rucb",
            Algorithm::Dts => "dts",
            Algorithm::IpeaRucb => "ipea-rucb",
            Algorithm::IpeaDts => "ipea-dts",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub seed: u64,
    #[serde(default = "default_w_floor")]
    pub w_floor: f64,
    /// Also file each queried pair as evidence for its related pairs, so
    /// related pairs benefit before they are queried themselves.
    #[serde(default)]
    pub reverse_dependencies: bool,
}

fn default_w_floor() -> f64 {
    DEFAULT_W_FLOOR
}

impl EngineConfig {
    pub fn new(algorithm: Algorithm, alpha: f64, seed: u64) -> Self {
        Self { algorithm, alpha, seed, w_floor: DEFAULT_W_FLOOR, reverse_dependencies: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.w_floor) {
            return Err(Error::invalid(format!("w_floor {} outside [0, 1]", self.w_floor)));
        }
        Ok(())
    }
}

/// Answers duels.
pub trait DuelOracle {
    /// Winner of `champion` against `challenger`.
    fn duel(&mut self, champion: usize, challenger: usize) -> Result<usize>;
}

/// Bernoulli draws from a known preference matrix.
#[derive(Clone, Debug)]
pub struct SimulatedOracle {
    p: PreferenceMatrix,
    rng: ChaCha8Rng,
}

impl SimulatedOracle {
    pub fn new(p: PreferenceMatrix, seed: u64) -> Self {
        Self { p, rng: stream_rng(seed, ORACLE_STREAM) }
    }
}

impl DuelOracle for SimulatedOracle {
    fn duel(&mut self, c: usize, d: usize) -> Result<usize> {
        let k = self.p.k();
        if c >= k || d >= k {
            return Err(Error::Oracle(format!("pair ({}, {}) outside {k} candidates", c + 1, d + 1)));
        }
        Ok(if self.rng.random::<f64>() < self.p.get(c, d) { c } else { d })
    }
}

/// Row of the estimated ranking.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub index: usize,
    /// `#{j : p_ij > 1/2}` over same-pool opponents.
    pub copeland: usize,
    pub min_upper: f64,
    pub mean_upper: f64,
}

/// Per-candidate regret gaps relative to the winner of the candidate's pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretModel {
    gaps: Vec<f64>,
}

impl RegretModel {
    /// `None` when some pool lacks a Condorcet winner.
    pub fn new(p: &PreferenceMatrix, pools: &[Vec<usize>]) -> Option<Self> {
        let mut gaps = vec![0.0; p.k()];
        for arms in pools {
            let sub = PreferenceMatrix::from_upper(arms.len(), |a, b| p.get(arms[a], arms[b])).ok()?;
            let w = find_condorcet_winner(&sub)?;
            for (a, &arm) in arms.iter().enumerate() {
                gaps[arm] = if a == w { 0.0 } else { sub.get(w, a) - 0.5 };
            }
        }
        Some(Self { gaps })
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn regret(&self, c: usize, d: usize) -> f64 {
        (self.gaps[c] + self.gaps[d]) / 2.0
    }
}

/// Augmentation performed after one duel.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    pub candidates: usize,
    pub added: usize,
    pub failed: usize,
}

/// Mutable state of one run.
#[derive(Clone, Debug)]
pub struct EngineState {
    config: EngineConfig,
    candidates: CandidateSet,
    clusters: ClusterAssignment,
    pool_of: Vec<usize>,
    pools: Vec<Vec<usize>>,
    truth: Option<PreferenceMatrix>,
    regret: Option<RegretModel>,
    wins: WinningMatrix,
    store: DependencyStore,
    hypotheses: Vec<Option<usize>>,
    rng: ChaCha8Rng,
    annotator: Annotator,
    annotations: BTreeMap<(usize, usize, usize, usize), Option<f64>>,
    augmented: u64,
}

impl EngineState {
    /// `pool_of[i]` assigns each candidate to a context; `None` means one
    /// shared context. `truth` enables oracle annotators and regret.
    pub fn new(
        config: EngineConfig,
        candidates: CandidateSet,
        clusters: ClusterAssignment,
        pool_of: Option<Vec<usize>>,
        truth: Option<PreferenceMatrix>,
        annotator: Annotator,
    ) -> Result<Self> {
        config.validate()?;
        let k = candidates.k();
        if clusters.k() != k {
            return Err(Error::invalid(format!(
                "cluster assignment covers {} candidates, expected {k}",
                clusters.k()
            )));
        }
        if let Some(p) = &truth {
            if p.k() != k {
                return Err(Error::invalid(format!("preference matrix is {0}x{0}, expected {k}", p.k())));
            }
        }
        if config.algorithm.is_augmented() && annotator.spec().needs_oracle() && truth.is_none() {
            return Err(Error::invalid(format!(
                "annotator {} needs a ground-truth preference matrix",
                annotator.spec()
            )));
        }
        let pool_of = pool_of.unwrap_or_else(|| vec![0; k]);
        if pool_of.len() != k {
            return Err(Error::invalid("pool assignment length differs from K"));
        }
        let n_pools = pool_of.iter().max().map_or(0, |m| m + 1);
        let mut pools = vec![Vec::new(); n_pools];
        for (i, &p) in pool_of.iter().enumerate() {
            pools[p].push(i);
        }
        if let Some(small) = pools.iter().position(|p| p.len() < 2) {
            return Err(Error::invalid(format!("context {} has fewer than two candidates", small + 1)));
        }
        let regret = truth.as_ref().and_then(|p| RegretModel::new(p, &pools));
        Ok(Self {
            rng: stream_rng(config.seed, SELECTION_STREAM),
            store: DependencyStore::with_floor(k, config.w_floor),
            wins: WinningMatrix::new(k),
            hypotheses: vec![None; n_pools],
            config,
            candidates,
            clusters,
            pool_of,
            pools,
            truth,
            regret,
            annotator,
            annotations: BTreeMap::new(),
            augmented: 0,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn algorithm(&self) -> Algorithm {
        self.config.algorithm
    }

    pub fn k(&self) -> usize {
        self.candidates.k()
    }

    pub fn candidates(&self) -> &CandidateSet {
        &self.candidates
    }

    pub fn clusters(&self) -> &ClusterAssignment {
        &self.clusters
    }

    pub fn pools(&self) -> &[Vec<usize>] {
        &self.pools
    }

    pub fn pool_of(&self, i: usize) -> usize {
        self.pool_of[i]
    }

    pub fn truth(&self) -> Option<&PreferenceMatrix> {
        self.truth.as_ref()
    }

    pub fn regret_model(&self) -> Option<&RegretModel> {
        self.regret.as_ref()
    }

    pub fn wins(&self) -> &WinningMatrix {
        &self.wins
    }

    pub fn store(&self) -> &DependencyStore {
        &self.store
    }

    /// Duels recorded so far.
    pub fn round(&self) -> u64 {
        self.wins.total()
    }

    /// Dependency entries added by augmentation (mirrors not counted).
    pub fn augmentations(&self) -> u64 {
        self.augmented
    }

    pub fn annotation_cache(&self) -> &BTreeMap<(usize, usize, usize, usize), Option<f64>> {
        &self.annotations
    }

    /// Seeds the annotation cache, for example from an exported session, so
    /// later augmentation reuses these answers instead of asking again.
    pub fn preload_annotations(&mut self, cached: impl IntoIterator<Item = ((usize, usize, usize, usize), Option<f64>)>) {
        self.annotations.extend(cached);
    }

    /// Context queried in the current round (round robin over pools).
    pub fn current_pool(&self) -> usize {
        (self.round() % self.pools.len() as u64) as usize
    }

    pub fn hypothesis(&self, pool: usize) -> Option<usize> {
        self.hypotheses[pool]
    }

    /// Round index fed to the bounds: one more than the duels so far.
    fn bound_round(&self) -> u64 {
        self.round() + 1
    }

    fn estimate(&self, i: usize, j: usize, t: u64) -> Result<(BoundEstimate, (f64, f64))> {
        let (bij, bji) = (self.wins.wins(i, j), self.wins.wins(j, i));
        if !self.config.algorithm.is_augmented() {
            let e = context_free_bound(bij, bji, self.config.alpha, t)?;
            return Ok((e, (bij as f64, bji as f64)));
        }
        let evidence = self.store.evidence(i, j, &self.wins);
        let e = augmented_bound(bij, bji, &evidence, self.config.alpha, t)?;
        let mut pseudo = (bij as f64, bji as f64);
        for ev in &evidence {
            pseudo.0 += ev.weight * ev.wins as f64;
            pseudo.1 += ev.weight * (ev.count - ev.wins) as f64;
        }
        Ok((e, pseudo))
    }

    /// Bounds over the given arms at the current round.
    pub fn bound_matrix(&self, arms: &[usize]) -> Result<BoundMatrix> {
        let t = self.bound_round();
        let n = arms.len();
        let mut estimates = Vec::with_capacity(n * n);
        let mut pseudo = Vec::with_capacity(n * n);
        for &i in arms {
            for &j in arms {
                if i == j {
                    estimates.push(BoundEstimate::diagonal(self.config.alpha, t));
                    pseudo.push((0.0, 0.0));
                } else {
                    let (e, p) = self.estimate(i, j, t)?;
                    estimates.push(e);
                    pseudo.push(p);
                }
            }
        }
        Ok(BoundMatrix::new(arms.to_vec(), estimates, pseudo))
    }

    /// Bounds for one ordered pair at the current round.
    pub fn bound(&self, i: usize, j: usize) -> Result<BoundEstimate> {
        if i == j {
            return Ok(BoundEstimate::diagonal(self.config.alpha, self.bound_round()));
        }
        Ok(self.estimate(i, j, self.bound_round())?.0)
    }

    /// Selects the next duel in the current context. Calling it again
    /// without recording draws a fresh pair from the same bounds.
    pub fn propose(&mut self) -> Result<DuelChoice> {
        let pool = self.current_pool();
        let bounds = self.bound_matrix(&self.pools[pool])?;
        let local = if self.config.algorithm.is_thompson() {
            dts_select(&bounds, &mut self.rng)
        } else {
            let mut hyp = self.hypotheses[pool].and_then(|g| bounds.local(g));
            let choice = rucb_select(&bounds, &mut hyp, &mut self.rng);
            self.hypotheses[pool] = hyp.map(|l| bounds.arms()[l]);
            choice
        };
        let arms = bounds.arms();
        Ok(DuelChoice {
            champion: arms[local.champion],
            challenger: arms[local.challenger],
            pool: local.pool.iter().map(|&l| arms[l]).collect(),
            challenger_upper: local.challenger_upper,
        })
    }

    /// Records the outcome of a proposed duel and, for augmented algorithms,
    /// extends the dependency store.
    pub fn record(&mut self, champion: usize, challenger: usize, winner: usize) -> Result<Augmentation> {
        if winner != champion && winner != challenger {
            return Err(Error::invalid(format!(
                "winner {} is not part of duel ({}, {})",
                winner + 1,
                champion + 1,
                challenger + 1
            )));
        }
        if self.pool_of.get(champion) != self.pool_of.get(challenger) {
            return Err(Error::invalid("duels across contexts are not allowed"));
        }
        let loser = if winner == champion { challenger } else { champion };
        self.wins.record(winner, loser)?;
        if !self.config.algorithm.is_augmented() {
            return Ok(Augmentation::default());
        }
        Ok(self.augment(champion, challenger))
    }

    fn augment(&mut self, c: usize, d: usize) -> Augmentation {
        let pool_of = &self.pool_of;
        let related = candidate_related_pairs(&self.clusters, c, d, |m, n| pool_of[m] == pool_of[n]);
        let mut out = Augmentation { candidates: related.len(), ..Default::default() };
        for (m, n) in related {
            let mut file = |state: &mut Self, target: (usize, usize), source: (usize, usize)| {
                match state.weight(target, source) {
                    Some(w) => {
                        let prov = state.annotator.provenance();
                        if let Ok(true) = state.store.insert(target, source, w, prov) {
                            out.added += 1;
                        }
                    }
                    None => out.failed += 1,
                }
            };
            file(self, (c, d), (m, n));
            if self.config.reverse_dependencies {
                file(self, (m, n), (c, d));
            }
        }
        self.augmented += out.added as u64;
        out
    }

    /// Cached weight of `source` as evidence for `target`, orienting the
    /// target pair as `(min, max)` so each relation is annotated once.
    fn weight(&mut self, target: (usize, usize), source: (usize, usize)) -> Option<f64> {
        let ((i, j), (m, n)) = if target.0 < target.1 {
            (target, source)
        } else {
            ((target.1, target.0), (source.1, source.0))
        };
        if let Some(&w) = self.annotations.get(&(i, j, m, n)) {
            return w;
        }
        if matches!(self.annotator.spec(), crate::depgraph::AnnotatorSpec::Manual) {
            return None;
        }
        let ctx = AnnotationContext {
            labels: Some(self.candidates.labels()),
            features: self.candidates.features(),
            oracle: self.truth.as_ref(),
        };
        let w = self.annotator.annotate((i, j), (m, n), &ctx).ok().flatten();
        self.annotations.insert((i, j, m, n), w);
        w
    }

    /// Adds a person's weight for `source` as evidence for `target`.
    pub fn add_manual_annotation(&mut self, target: (usize, usize), source: (usize, usize), weight: f64) -> Result<bool> {
        let added = self.store.insert(target, source, weight, Provenance::Manual)?;
        if added {
            self.augmented += 1;
        }
        Ok(added)
    }

    /// One full simulated round.
    pub fn run_round(&mut self, oracle: &mut dyn DuelOracle) -> Result<RoundEvent> {
        let choice = self.propose()?;
        let (c, d) = (choice.champion, choice.challenger);
        let winner = oracle.duel(c, d)?;
        let aug = self.record(c, d, winner)?;
        Ok(RoundEvent {
            t: self.round(),
            algo: self.config.algorithm,
            champion: c,
            challenger: d,
            winner,
            regret: self.regret.as_ref().map(|r| r.regret(c, d)),
            n_augmented: aug.added,
            seed: self.config.seed,
        })
    }

    /// Candidates ranked by Copeland score from the estimated means.
    pub fn leaderboard(&self) -> Result<Vec<LeaderboardRow>> {
        let mut rows = Vec::with_capacity(self.k());
        for arms in &self.pools {
            let bounds = self.bound_matrix(arms)?;
            for (a, &index) in arms.iter().enumerate() {
                let others: Vec<usize> = (0..arms.len()).filter(|&b| b != a).collect();
                let copeland = others.iter().filter(|&&b| bounds.get(a, b).mean > 0.5).count();
                let uppers: Vec<f64> = others.iter().map(|&b| bounds.upper(a, b)).collect();
                rows.push(LeaderboardRow {
                    index,
                    copeland,
                    min_upper: uppers.iter().copied().fold(f64::INFINITY, f64::min),
                    mean_upper: uppers.iter().sum::<f64>() / uppers.len() as f64,
                });
            }
        }
        rows.sort_by(|a, b| b.copeland.cmp(&a.copeland).then(a.index.cmp(&b.index)));
        Ok(rows)
    }
}

/// Candidates ranked by Copeland score from the estimated means.
pub fn estimate_leaderboard(state: &EngineState) -> Result<Vec<LeaderboardRow>> {
    state.leaderboard()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depgraph::AnnotatorSpec;

    fn five_arm() -> PreferenceMatrix {
        // Arm 0 beats all; others ordered by index.
        PreferenceMatrix::from_upper(5, |i, j| 0.5 + 0.06 * (j - i) as f64).unwrap()
    }

    fn engine(algo: Algorithm, seed: u64, clusters: ClusterAssignment, p: &PreferenceMatrix) -> EngineState {
        EngineState::new(
            EngineConfig::new(algo, DEFAULT_ALPHA, seed),
            CandidateSet::numbered(p.k()).unwrap(),
            clusters,
            None,
            Some(p.clone()),
            Annotator::new(AnnotatorSpec::Oracle, annotator_seed(seed)).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn fresh_leaderboard_is_flat() {
        let p = five_arm();
        let e = engine(Algorithm::Rucb, 1, ClusterAssignment::singletons(5), &p);
        let board = e.leaderboard().unwrap();
        assert!(board.iter().all(|r| r.copeland == 4));
        assert_eq!(board.iter().map(|r| r.index).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn single_win_lifts_winner() {
        let p = five_arm();
        let mut e = engine(Algorithm::Rucb, 1, ClusterAssignment::singletons(5), &p);
        e.record(2, 0, 2).unwrap();
        let board = e.leaderboard().unwrap();
        let score = |i: usize| board.iter().find(|r| r.index == i).unwrap().copeland;
        assert!(score(2) >= score(0));
    }

    #[test]
    fn counts_are_conserved_and_no_self_duels() {
        let p = five_arm();
        for algo in Algorithm::ALL {
            let mut e = engine(algo, 3, ClusterAssignment::singletons(5), &p);
            let mut oracle = SimulatedOracle::new(p.clone(), 3);
            for _ in 0..300 {
                let ev = e.run_round(&mut oracle).unwrap();
                assert_ne!(ev.champion, ev.challenger);
            }
            assert_eq!(e.wins().total(), 300);
        }
    }

    #[test]
    fn no_edges_means_no_augmentation() {
        let p = five_arm();
        let mut plain = engine(Algorithm::Rucb, 11, ClusterAssignment::singletons(5), &p);
        let mut aug = engine(Algorithm::IpeaRucb, 11, ClusterAssignment::singletons(5), &p);
        let mut o1 = SimulatedOracle::new(p.clone(), 11);
        let mut o2 = SimulatedOracle::new(p.clone(), 11);
        for _ in 0..200 {
            let a = plain.run_round(&mut o1).unwrap();
            let b = aug.run_round(&mut o2).unwrap();
            assert_eq!((a.champion, a.challenger, a.winner), (b.champion, b.challenger, b.winner));
        }
        assert!(aug.store().is_empty());
    }

    #[test]
    fn augmentation_only_for_cross_cluster_duels() {
        let p = five_arm();
        let clusters = ClusterAssignment::from_groups(5, vec![vec![0, 1, 2], vec![3, 4]]).unwrap();
        let mut e = engine(Algorithm::IpeaRucb, 5, clusters.clone(), &p);
        let mut oracle = SimulatedOracle::new(p.clone(), 5);
        for _ in 0..300 {
            let before = e.store().total_entries();
            let ev = e.run_round(&mut oracle).unwrap();
            if clusters.share_group(ev.champion, ev.challenger) {
                assert_eq!(e.store().total_entries(), before);
                assert_eq!(ev.n_augmented, 0);
            }
        }
        assert!(e.augmentations() > 0);
        assert!(e.store().is_mirror_consistent());
    }

    #[test]
    fn pools_are_never_crossed() {
        let p = PreferenceMatrix::from_upper(6, |i, j| if i / 3 == j / 3 { 0.7 } else { 0.5 }).unwrap();
        let mut e = EngineState::new(
            EngineConfig::new(Algorithm::IpeaDts, 0.1, 2),
            CandidateSet::numbered(6).unwrap(),
            ClusterAssignment::from_groups(6, vec![vec![0, 3], vec![1, 4], vec![2, 5]]).unwrap(),
            Some(vec![0, 0, 0, 1, 1, 1]),
            Some(p.clone()),
            Annotator::new(AnnotatorSpec::Oracle, 0).unwrap(),
        )
        .unwrap();
        let mut oracle = SimulatedOracle::new(p, 2);
        for t in 0..100 {
            let ev = e.run_round(&mut oracle).unwrap();
            assert_eq!(ev.champion / 3, ev.challenger / 3);
            assert_eq!(ev.champion / 3, t % 2);
        }
        assert!(e.record(0, 3, 0).is_err());
    }

    #[test]
    fn winner_must_be_in_pair() {
        let p = five_arm();
        let mut e = engine(Algorithm::Dts, 0, ClusterAssignment::singletons(5), &p);
        assert!(e.record(0, 1, 2).is_err());
        assert_eq!(e.round(), 0);
    }

    #[test]
    fn dts_prefers_overwhelming_winner() {
        let p = PreferenceMatrix::from_upper(2, |_, _| 0.9).unwrap();
        let mut e = engine(Algorithm::Dts, 0, ClusterAssignment::singletons(2), &p);
        for _ in 0..1_000_000 {
            e.wins.record(0, 1).unwrap();
        }
        for _ in 0..50 {
            assert_eq!(e.propose().unwrap().champion, 0);
        }
    }
}
