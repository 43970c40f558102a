use std::time::{SystemTime, UNIX_EPOCH};

use duelkit_core::depgraph::{
    build_graph, candidate_related_pairs, render_prompt, similarity_for_table, soft_cluster, AnnotationContext,
    Annotator, AnnotatorSpec, ClusterAssignment, SimilarityMetric, DEFAULT_SIMILARITY_THRESHOLD,
};
use duelkit_core::engine::{annotator_seed, Algorithm, DuelChoice, EngineConfig, EngineState, DEFAULT_ALPHA};
use duelkit_core::problems::{car_instance, clustered_instance, dtlz_instance, sushi_instance, DtlzParams, DtlzSource};
use duelkit_core::{CandidateSet, PreferenceMatrix};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

/// Version of the export archive layout.
pub const ARCHIVE_SCHEMA_VERSION: u32 = 1;

/// Related pairs offered for manual annotation per query.
const MAX_PROMPTS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Demo {
    Sushi,
    Car,
    Dtlz2,
    Clustered,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub metric: Option<SimilarityMetric>,
}

/// Body of `POST /sessions`. Either `candidates` or `demo` is required.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    #[serde(default)]
    pub candidates: Option<CandidateSet>,
    #[serde(default)]
    pub demo: Option<Demo>,
    #[serde(default)]
    pub algorithm: Option<Algorithm>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub similarity: SimilarityConfig,
    #[serde(default)]
    pub annotator: Option<AnnotatorSpec>,
    /// Ground truth for demo sessions; enables regret tracking.
    #[serde(default)]
    pub preferences: Option<PreferenceMatrix>,
    /// 1-based context of each candidate.
    #[serde(default)]
    pub contexts: Option<Vec<usize>>,
}

/// Fully resolved session configuration, as stored in exports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub candidates: CandidateSet,
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub seed: u64,
    pub threshold: f64,
    pub metric: Option<SimilarityMetric>,
    pub annotator: AnnotatorSpec,
    pub preferences: Option<PreferenceMatrix>,
    pub contexts: Option<Vec<usize>>,
}

impl CreateSessionRequest {
    pub fn resolve(self, max_k: usize) -> Result<SessionConfig, ApiError> {
        let (candidates, demo_truth, demo_metric) = match (self.candidates, self.demo) {
            (Some(_), Some(_)) => return Err(ApiError::bad_request("give either candidates or demo, not both")),
            (None, None) => return Err(ApiError::bad_request("candidates or demo is required")),
            (Some(c), None) => (c, None, None),
            (None, Some(demo)) => {
                let inst = match demo {
                    Demo::Sushi => sushi_instance(None),
                    Demo::Car => car_instance(None),
                    Demo::Dtlz2 => dtlz_instance(DtlzSource::Dtlz2, DtlzParams { n: 30, ..Default::default() }),
                    Demo::Clustered => clustered_instance(Default::default()),
                }
                .map_err(ApiError::internal)?;
                let metric = inst.metrics.first().copied();
                (inst.candidates, Some(inst.preferences), metric)
            }
        };
        let k = candidates.k();
        if k > max_k {
            return Err(ApiError::too_large(format!("{k} candidates exceed the limit of {max_k}")));
        }
        let preferences = self.preferences.or(demo_truth);
        if let Some(p) = &preferences {
            if p.k() != k {
                return Err(ApiError::bad_request(format!("preference matrix is {0}x{0} for {k} candidates", p.k())));
            }
        }
        if let Some(ctx) = &self.contexts {
            if ctx.len() != k || ctx.contains(&0) {
                return Err(ApiError::bad_request("contexts must give a 1-based context for every candidate"));
            }
        }
        let annotator = self.annotator.unwrap_or(if preferences.is_some() {
            AnnotatorSpec::Oracle
        } else {
            AnnotatorSpec::Manual
        });
        Ok(SessionConfig {
            candidates,
            algorithm: self.algorithm.unwrap_or(Algorithm::IpeaRucb),
            alpha: self.alpha.unwrap_or(DEFAULT_ALPHA),
            seed: self.seed.unwrap_or_else(rand::random),
            threshold: self.similarity.threshold.unwrap_or(DEFAULT_SIMILARITY_THRESHOLD),
            metric: self.similarity.metric.or(demo_metric),
            annotator,
            preferences,
            contexts: self.contexts,
        })
    }
}

/// How a pending duel was answered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Winner,
    Tie,
    Skip,
}

/// A person's weight for `source` as evidence about `target`, 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManualAnnotation {
    pub target: [usize; 2],
    pub source: [usize; 2],
    pub weight: f64,
}

/// Body of `POST /sessions/{id}/feedback`, 1-based.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub champion: usize,
    pub challenger: usize,
    /// Defaults to `winner` when a winner is given.
    #[serde(default)]
    pub outcome: Option<Outcome>,
    #[serde(default)]
    pub winner: Option<usize>,
    #[serde(default)]
    pub annotations: Vec<ManualAnnotation>,
}

/// One entry of the audit log, 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HistoryEntry {
    Duel { champion: usize, challenger: usize, winner: usize },
    Tie { champion: usize, challenger: usize },
    Skip { champion: usize, challenger: usize },
    Annotation(ManualAnnotation),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CachedWeight {
    pub target: [usize; 2],
    pub source: [usize; 2],
    pub weight: Option<f64>,
}

/// Portable session archive; replaying it rebuilds the same state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionArchive {
    pub schema_version: u32,
    pub config: SessionConfig,
    pub history: Vec<HistoryEntry>,
    /// Annotator answers, so replays never call the annotator again.
    pub annotation_cache: Vec<CachedWeight>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateCard {
    pub index: usize,
    pub label: String,
    /// `(feature, value)` pairs for display.
    pub features: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationPrompt {
    pub target: [usize; 2],
    pub source: [usize; 2],
    pub prompt: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryView {
    /// Round the pending duel belongs to (1 for the first duel).
    pub round: u64,
    pub champion: usize,
    pub challenger: usize,
    pub cards: [CandidateCard; 2],
    /// Related pairs without a weight yet, for optional manual annotation.
    pub annotation_prompts: Vec<AnnotationPrompt>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub rank: usize,
    pub index: usize,
    pub label: String,
    pub copeland: usize,
    /// Estimated probability of beating the current leader.
    pub p_vs_leader: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub round: u64,
    pub k: usize,
    pub algorithm: Algorithm,
    pub leaderboard: Vec<LeaderboardEntry>,
    pub p_hat: Vec<Vec<f64>>,
    pub u_hat: Vec<Vec<f64>>,
    pub l_hat: Vec<Vec<f64>>,
    pub wins: Vec<Vec<u64>>,
    pub augmentations: u64,
    pub dependency_entries: usize,
    pub ties: u64,
    pub skips: u64,
    /// Cumulative regret per recorded duel; demo sessions only.
    pub regret: Option<Vec<f64>>,
    pub pending: Option<[usize; 2]>,
    pub created_at: u64,
    pub updated_at: u64,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn clusters_for(config: &SessionConfig) -> Result<ClusterAssignment, ApiError> {
    let k = config.candidates.k();
    let Some(table) = config.candidates.features() else {
        return Ok(ClusterAssignment::singletons(k));
    };
    let (sim, used) = similarity_for_table(table, config.metric).map_err(ApiError::bad_request)?;
    Ok(soft_cluster(&build_graph(&sim, config.threshold, used)))
}

fn pair(a: usize, b: usize) -> [usize; 2] {
    [a + 1, b + 1]
}

/// Converts a 1-based pair, checking range.
fn zero_based(p: [usize; 2], k: usize) -> Result<(usize, usize), ApiError> {
    if p.iter().any(|&x| x == 0 || x > k) {
        return Err(ApiError::unprocessable(format!("indices {p:?} outside 1..={k}")));
    }
    Ok((p[0] - 1, p[1] - 1))
}

#[derive(Debug)]
pub struct Session {
    id: String,
    config: SessionConfig,
    state: EngineState,
    pending: Option<DuelChoice>,
    history: Vec<HistoryEntry>,
    regret: Vec<f64>,
    ties: u64,
    skips: u64,
    created_at: u64,
    updated_at: u64,
    version: u64,
}

impl Session {
    pub fn new(id: String, config: SessionConfig) -> Result<Self, ApiError> {
        let clusters = clusters_for(&config)?;
        let pool_of = config.contexts.as_ref().map(|c| c.iter().map(|x| x - 1).collect());
        let annotator = Annotator::new(config.annotator.clone(), annotator_seed(config.seed)).map_err(ApiError::bad_request)?;
        let state = EngineState::new(
            EngineConfig::new(config.algorithm, config.alpha, config.seed),
            config.candidates.clone(),
            clusters,
            pool_of,
            config.preferences.clone(),
            annotator,
        )
        .map_err(ApiError::bad_request)?;
        let created = now();
        let mut session = Self {
            id,
            config,
            state,
            pending: None,
            history: Vec::new(),
            regret: Vec::new(),
            ties: 0,
            skips: 0,
            created_at: created,
            updated_at: created,
            version: 0,
        };
        session.advance()?;
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    /// Bumped on every mutation.
    pub fn version(&self) -> u64 {
        self.version
    }

    fn advance(&mut self) -> Result<(), ApiError> {
        self.pending = Some(self.state.propose().map_err(ApiError::internal)?);
        Ok(())
    }

    fn touch(&mut self) {
        self.updated_at = now();
        self.version += 1;
    }

    fn card(&self, i: usize) -> CandidateCard {
        let features = self
            .config
            .candidates
            .features()
            .map(|t| t.columns().iter().zip(t.row(i)).map(|(c, v)| (c.name.clone(), v.to_string())).collect())
            .unwrap_or_default();
        CandidateCard { index: i + 1, label: self.config.candidates.label(i).to_owned(), features }
    }

    pub fn query(&self) -> Result<QueryView, ApiError> {
        let choice = self.pending.as_ref().ok_or_else(|| ApiError::conflict("no pending query"))?;
        let (c, d) = (choice.champion, choice.challenger);
        let pool_of = |i: usize| self.state.pool_of(i);
        let ctx = AnnotationContext {
            labels: Some(self.config.candidates.labels()),
            features: self.config.candidates.features(),
            oracle: None,
        };
        let annotation_prompts = candidate_related_pairs(self.state.clusters(), c, d, |m, n| pool_of(m) == pool_of(n))
            .into_iter()
            .filter(|&source| self.state.store().get((c, d), source).is_none())
            .take(MAX_PROMPTS)
            .map(|(m, n)| AnnotationPrompt {
                target: pair(c, d),
                source: pair(m, n),
                prompt: render_prompt(&ctx, (c, d), (m, n)),
            })
            .collect();
        Ok(QueryView {
            round: self.state.round() + 1,
            champion: c + 1,
            challenger: d + 1,
            cards: [self.card(c), self.card(d)],
            annotation_prompts,
        })
    }

    /// Applies feedback for the pending duel, then proposes the next one.
    pub fn feedback(&mut self, req: &FeedbackRequest) -> Result<(), ApiError> {
        let pending = self.pending.as_ref().ok_or_else(|| ApiError::conflict("no pending query"))?;
        let (c, d) = (pending.champion + 1, pending.challenger + 1);
        let named = (req.champion.min(req.challenger), req.champion.max(req.challenger));
        if named != (c.min(d), c.max(d)) {
            return Err(ApiError::conflict(format!(
                "feedback names ({}, {}) but the pending duel is ({c}, {d})",
                req.champion, req.challenger
            )));
        }
        let outcome = match (req.outcome, req.winner) {
            (Some(o), _) => o,
            (None, Some(_)) => Outcome::Winner,
            (None, None) => return Err(ApiError::bad_request("feedback needs an outcome or a winner")),
        };
        let entry = match outcome {
            Outcome::Winner => {
                let w = req.winner.ok_or_else(|| ApiError::unprocessable("outcome winner needs a winner"))?;
                if w != c && w != d {
                    return Err(ApiError::unprocessable(format!("winner {w} is not in the pending duel ({c}, {d})")));
                }
                HistoryEntry::Duel { champion: c, challenger: d, winner: w }
            }
            Outcome::Tie => HistoryEntry::Tie { champion: c, challenger: d },
            Outcome::Skip => HistoryEntry::Skip { champion: c, challenger: d },
        };
        for a in &req.annotations {
            self.check_annotation(a)?;
        }
        self.apply(entry)?;
        for a in &req.annotations {
            self.apply(HistoryEntry::Annotation(*a))?;
        }
        Ok(())
    }

    fn check_annotation(&self, a: &ManualAnnotation) -> Result<(), ApiError> {
        let k = self.state.k();
        let (i, j) = zero_based(a.target, k)?;
        let (m, n) = zero_based(a.source, k)?;
        if i == j || m == n {
            return Err(ApiError::unprocessable("annotation pairs need two distinct candidates"));
        }
        if (i.min(j), i.max(j)) == (m.min(n), m.max(n)) {
            return Err(ApiError::unprocessable("a pair cannot be evidence for itself"));
        }
        if !(0.0..=1.0).contains(&a.weight) {
            return Err(ApiError::unprocessable(format!("weight {} outside [0, 1]", a.weight)));
        }
        Ok(())
    }

    /// Adds manual annotations; returns how many were stored.
    pub fn annotate(&mut self, annotations: &[ManualAnnotation]) -> Result<usize, ApiError> {
        for a in annotations {
            self.check_annotation(a)?;
        }
        let mut added = 0;
        for a in annotations {
            added += usize::from(self.apply(HistoryEntry::Annotation(*a))?);
        }
        Ok(added)
    }

    /// The single mutation path shared by live requests and replays. True
    /// when a duel was recorded or an annotation stored.
    fn apply(&mut self, entry: HistoryEntry) -> Result<bool, ApiError> {
        let k = self.state.k();
        let changed = match &entry {
            HistoryEntry::Duel { champion, challenger, winner } => {
                let (c, d) = zero_based([*champion, *challenger], k)?;
                let w = zero_based([*winner, *winner], k)?.0;
                self.state.record(c, d, w).map_err(ApiError::unprocessable)?;
                if let Some(model) = self.state.regret_model() {
                    let last = self.regret.last().copied().unwrap_or(0.0);
                    self.regret.push(last + model.regret(c, d));
                }
                self.advance()?;
                true
            }
            HistoryEntry::Tie { .. } => {
                self.ties += 1;
                self.advance()?;
                false
            }
            HistoryEntry::Skip { .. } => {
                self.skips += 1;
                self.advance()?;
                false
            }
            HistoryEntry::Annotation(a) => {
                let target = zero_based(a.target, k)?;
                let source = zero_based(a.source, k)?;
                self.state.add_manual_annotation(target, source, a.weight).map_err(ApiError::unprocessable)?
            }
        };
        self.history.push(entry);
        self.touch();
        Ok(changed)
    }

    pub fn leaderboard(&self) -> Result<Vec<LeaderboardEntry>, ApiError> {
        let rows = self.state.leaderboard().map_err(ApiError::internal)?;
        let leader = rows.first().map_or(0, |r| r.index);
        rows.iter()
            .enumerate()
            .map(|(rank, r)| {
                let p = if r.index == leader { 0.5 } else { self.state.bound(r.index, leader).map_err(ApiError::internal)?.mean };
                Ok(LeaderboardEntry {
                    rank: rank + 1,
                    index: r.index + 1,
                    label: self.config.candidates.label(r.index).to_owned(),
                    copeland: r.copeland,
                    p_vs_leader: p,
                })
            })
            .collect()
    }

    pub fn snapshot(&self) -> Result<StateView, ApiError> {
        let k = self.state.k();
        let mut p_hat = vec![vec![0.0; k]; k];
        let mut u_hat = vec![vec![0.0; k]; k];
        let mut l_hat = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..k {
                let b = self.state.bound(i, j).map_err(ApiError::internal)?;
                p_hat[i][j] = b.mean;
                u_hat[i][j] = b.upper;
                l_hat[i][j] = b.lower;
            }
        }
        Ok(StateView {
            round: self.state.round(),
            k,
            algorithm: self.config.algorithm,
            leaderboard: self.leaderboard()?,
            p_hat,
            u_hat,
            l_hat,
            wins: self.state.wins().rows(),
            augmentations: self.state.augmentations(),
            dependency_entries: self.state.store().total_entries(),
            ties: self.ties,
            skips: self.skips,
            regret: self.state.regret_model().map(|_| self.regret.clone()),
            pending: self.pending.as_ref().map(|p| pair(p.champion, p.challenger)),
            created_at: self.created_at,
            updated_at: self.updated_at,
        })
    }

    pub fn export(&self) -> SessionArchive {
        SessionArchive {
            schema_version: ARCHIVE_SCHEMA_VERSION,
            config: self.config.clone(),
            history: self.history.clone(),
            annotation_cache: self
                .state
                .annotation_cache()
                .iter()
                .map(|(&(i, j, m, n), &weight)| CachedWeight { target: pair(i, j), source: pair(m, n), weight })
                .collect(),
        }
    }

    /// Rebuilds a session by replaying an archive through the engine.
    pub fn replay(id: String, archive: &SessionArchive) -> Result<Self, ApiError> {
        if archive.schema_version != ARCHIVE_SCHEMA_VERSION {
            return Err(ApiError::bad_request(format!(
                "archive schema {} is not supported (expected {ARCHIVE_SCHEMA_VERSION})",
                archive.schema_version
            )));
        }
        let mut session = Self::new(id, archive.config.clone())?;
        let k = session.state.k();
        let mut cache = Vec::with_capacity(archive.annotation_cache.len());
        for c in &archive.annotation_cache {
            let (i, j) = zero_based(c.target, k)?;
            let (m, n) = zero_based(c.source, k)?;
            cache.push(((i, j, m, n), c.weight));
        }
        session.state.preload_annotations(cache);
        for entry in &archive.history {
            if let HistoryEntry::Duel { champion, challenger, .. }
            | HistoryEntry::Tie { champion, challenger }
            | HistoryEntry::Skip { champion, challenger } = entry
            {
                let p = session.pending.as_ref().map(|p| (p.champion + 1, p.challenger + 1));
                if p != Some((*champion, *challenger)) {
                    return Err(ApiError::unprocessable(format!(
                        "archive diverges at round {}: engine proposed {p:?}",
                        session.state.round() + 1
                    )));
                }
            }
            session.apply(entry.clone())?;
        }
        Ok(session)
    }
}
