use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{bradley_terry, Instance};
use crate::depgraph::SimilarityMetric;
use crate::{CandidateSet, Error, FeatureTable, PreferenceMatrix, Result};

/// Magic prefix of the binary embedding layout.
pub const EMBEDDING_MAGIC: &[u8; 8] = b"DKEMB001";

/// Responses to one prompt.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextPool {
    pub id: usize,
    /// Candidate ids within the pool, as given in the input files.
    pub candidates: Vec<usize>,
    pub embeddings: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

impl ContextPool {
    /// Bradley-Terry matrix from the pool's reward scores.
    pub fn preferences(&self) -> Result<PreferenceMatrix> {
        PreferenceMatrix::from_upper(self.rewards.len(), |i, j| bradley_terry(self.rewards[i], self.rewards[j]))
    }
}

/// Several candidate pools; duels are only meaningful inside a pool.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextualInstance {
    pools: Vec<ContextPool>,
}

type Keyed<T> = BTreeMap<(usize, usize), T>;

impl ContextualInstance {
    pub fn new(pools: Vec<ContextPool>) -> Result<Self> {
        if pools.is_empty() {
            return Err(Error::data("no context pools"));
        }
        let dim = pools[0].embeddings.first().map_or(0, Vec::len);
        for pool in &pools {
            if pool.candidates.len() < 2 {
                return Err(Error::data(format!("pool {} has fewer than two candidates", pool.id)));
            }
            if pool.embeddings.len() != pool.candidates.len() || pool.rewards.len() != pool.candidates.len() {
                return Err(Error::data(format!("pool {} has mismatched embeddings and rewards", pool.id)));
            }
            if pool.embeddings.iter().any(|e| e.len() != dim) || dim == 0 {
                return Err(Error::data("embeddings must share one non-zero dimension"));
            }
            if pool.rewards.iter().chain(pool.embeddings.iter().flatten()).any(|v| !v.is_finite()) {
                return Err(Error::data(format!("pool {} has non-finite values", pool.id)));
            }
        }
        Ok(Self { pools })
    }

    /// Joins rewards and embeddings by `(pool, candidate)` id.
    pub fn from_parts(rewards: Keyed<f64>, embeddings: Keyed<Vec<f64>>) -> Result<Self> {
        if rewards.len() != embeddings.len() || rewards.keys().any(|k| !embeddings.contains_key(k)) {
            return Err(Error::data("rewards and embeddings cover different (pool, candidate) ids"));
        }
        let mut pools: BTreeMap<usize, ContextPool> = BTreeMap::new();
        for ((pool, cand), reward) in rewards {
            let entry = pools.entry(pool).or_insert_with(|| ContextPool {
                id: pool,
                candidates: Vec::new(),
                embeddings: Vec::new(),
                rewards: Vec::new(),
            });
            entry.candidates.push(cand);
            entry.rewards.push(reward);
            entry.embeddings.push(embeddings[&(pool, cand)].clone());
        }
        Self::new(pools.into_values().collect())
    }

    pub fn pools(&self) -> &[ContextPool] {
        &self.pools
    }

    pub fn dim(&self) -> usize {
        self.pools[0].embeddings[0].len()
    }

    /// Flattens the pools into one candidate set. Cross-pool entries of the
    /// matrix are 1/2 and never queried.
    pub fn to_instance(&self) -> Result<Instance> {
        let mut labels = Vec::new();
        let mut rows = Vec::new();
        let mut pool_of = Vec::new();
        let mut rewards = Vec::new();
        for (p, pool) in self.pools.iter().enumerate() {
            for (c, &cand) in pool.candidates.iter().enumerate() {
                labels.push(format!("prompt {} response {}", pool.id, cand));
                rows.push(pool.embeddings[c].clone());
                pool_of.push(p);
                rewards.push(pool.rewards[c]);
            }
        }
        let preferences = PreferenceMatrix::from_upper(labels.len(), |i, j| {
            if pool_of[i] == pool_of[j] {
                bradley_terry(rewards[i], rewards[j])
            } else {
                0.5
            }
        })?;
        Ok(Instance {
            name: "contextual".into(),
            candidates: CandidateSet::new(labels, Some(FeatureTable::from_numeric_rows("e", &rows)?))?,
            preferences,
            pool_of: Some(pool_of),
            metrics: vec![SimilarityMetric::EuclideanMinmax, SimilarityMetric::Cosine],
            designated_winner: None,
        })
    }
}

fn id_field(record: &csv::StringRecord, c: usize, line: usize) -> Result<usize> {
    record
        .get(c)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::data(format!("line {} column {} is not an id", line + 2, c + 1)))
}

/// Rewards CSV with header and columns `pool, candidate, score`.
pub fn read_rewards<R: Read>(reader: R) -> Result<Keyed<f64>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = BTreeMap::new();
    for (line, record) in csv.records().enumerate() {
        let record = record?;
        let key = (id_field(&record, 0, line)?, id_field(&record, 1, line)?);
        let score: f64 = record
            .get(2)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::data(format!("line {} has no numeric score", line + 2)))?;
        if out.insert(key, score).is_some() {
            return Err(Error::data(format!("duplicate reward for pool {} candidate {}", key.0, key.1)));
        }
    }
    Ok(out)
}

/// Embeddings CSV with header and columns `pool, candidate, v1, ..., vD`.
pub fn read_embeddings_csv<R: Read>(reader: R) -> Result<Keyed<Vec<f64>>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = BTreeMap::new();
    for (line, record) in csv.records().enumerate() {
        let record = record?;
        let key = (id_field(&record, 0, line)?, id_field(&record, 1, line)?);
        let vector: std::result::Result<Vec<f64>, _> = record.iter().skip(2).map(str::parse::<f64>).collect();
        let vector = vector.map_err(|_| Error::data(format!("line {} has a non-numeric embedding", line + 2)))?;
        if out.insert(key, vector).is_some() {
            return Err(Error::data(format!("duplicate embedding for pool {} candidate {}", key.0, key.1)));
        }
    }
    Ok(out)
}

/// Binary embeddings, all little-endian: the 8-byte magic `DKEMB001`, a
/// `u32` dimension `D`, then rows of `u32 pool, u32 candidate, D x f32`.
pub fn read_embeddings_binary<R: Read>(mut reader: R) -> Result<Keyed<Vec<f64>>> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[..8] != EMBEDDING_MAGIC {
        return Err(Error::data("not a binary embedding file"));
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let dim = u32_at(8) as usize;
    let row_len = 8 + 4 * dim;
    let body = &bytes[12..];
    if dim == 0 || body.len() % row_len != 0 {
        return Err(Error::data("binary embedding file is truncated"));
    }
    let mut out = BTreeMap::new();
    for row in 0..body.len() / row_len {
        let base = 12 + row * row_len;
        let key = (u32_at(base) as usize, u32_at(base + 4) as usize);
        let vector = (0..dim)
            .map(|d| f32::from_le_bytes(bytes[base + 8 + 4 * d..base + 12 + 4 * d].try_into().expect("4 bytes")) as f64)
            .collect();
        if out.insert(key, vector).is_some() {
            return Err(Error::data(format!("duplicate embedding for pool {} candidate {}", key.0, key.1)));
        }
    }
    Ok(out)
}

pub fn write_embeddings_binary(embeddings: &Keyed<Vec<f64>>) -> Vec<u8> {
    let dim = embeddings.values().next().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(12 + embeddings.len() * (8 + 4 * dim));
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for (&(pool, cand), v) in embeddings {
        out.extend_from_slice(&(pool as u32).to_le_bytes());
        out.extend_from_slice(&(cand as u32).to_le_bytes());
        for &x in v {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

/// Loads rewards plus embeddings; the embedding layout is chosen by the
/// file's magic bytes.
pub fn contextual_instance(rewards: impl AsRef<Path>, embeddings: impl AsRef<Path>) -> Result<ContextualInstance> {
    let rewards = read_rewards(std::fs::File::open(rewards)?)?;
    let bytes = std::fs::read(embeddings)?;
    let embeddings = if bytes.starts_with(EMBEDDING_MAGIC) {
        read_embeddings_binary(bytes.as_slice())?
    } else {
        read_embeddings_csv(bytes.as_slice())?
    };
    ContextualInstance::from_parts(rewards, embeddings)
}

/// Synthetic stand-in for response pools: `pools` prompts with `per_pool`
/// responses each, embedded in `dim` dimensions.
///
/// Responses share a small set of latent styles across prompts; a style
/// fixes most of the embedding direction and most of the reward, so similar
/// responses in different pools are preferred alike.
pub fn synthetic_contextual(pools: usize, per_pool: usize, dim: usize, seed: u64) -> Result<ContextualInstance> {
    const STYLES: usize = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    };
    let styles: Vec<Vec<f64>> = (0..STYLES).map(|_| gauss(&mut rng, dim)).collect();
    let style_reward: Vec<f64> = (0..STYLES).map(|s| 1.5 - s as f64).collect();
    let mut out = Vec::with_capacity(pools);
    for p in 0..pools {
        let prompt = gauss(&mut rng, dim);
        let mut pool = ContextPool { id: p + 1, candidates: Vec::new(), embeddings: Vec::new(), rewards: Vec::new() };
        for c in 0..per_pool {
            let s = c % STYLES;
            let noise = gauss(&mut rng, dim);
            let v: Vec<f64> = (0..dim)
                .map(|d| styles[s][d] + 0.3 * prompt[d] + 0.25 * noise[d])
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            pool.candidates.push(c + 1);
            pool.embeddings.push(v.iter().map(|x| x / norm).collect());
            pool.rewards.push(style_reward[s] + 0.4 * rng.random::<f64>());
        }
        out.push(pool);
    }
    ContextualInstance::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const REWARDS: &str = "pool,candidate,score\n1,1,0.0\n1,2,1.0986122886681098\n2,1,0.5\n2,2,0.5\n";
    const EMB: &str = "pool,candidate,v1,v2\n1,1,1,0\n1,2,0,1\n2,1,1,1\n2,2,1,0.5\n";

    fn parsed() -> ContextualInstance {
        let r = read_rewards(REWARDS.as_bytes()).unwrap();
        let e = read_embeddings_csv(EMB.as_bytes()).unwrap();
        ContextualInstance::from_parts(r, e).unwrap()
    }

    #[test]
    fn bradley_terry_pools() {
        let inst = parsed();
        let p1 = inst.pools()[0].preferences().unwrap();
        assert!((p1.get(1, 0) - 0.75).abs() < 1e-12);
        assert_eq!(inst.pools()[1].preferences().unwrap().get(0, 1), 0.5);
        let flat = inst.to_instance().unwrap();
        assert_eq!(flat.candidates.k(), 4);
        assert_eq!(flat.preferences.get(0, 2), 0.5);
        assert_eq!(flat.pool_of, Some(vec![0, 0, 1, 1]));
    }

    #[test]
    fn binary_round_trip() {
        let e = read_embeddings_csv(EMB.as_bytes()).unwrap();
        let bytes = write_embeddings_binary(&e);
        assert_eq!(&bytes[..8], EMBEDDING_MAGIC);
        assert_eq!(read_embeddings_binary(bytes.as_slice()).unwrap(), e);
        assert!(read_embeddings_binary(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn rejects_tiny_pools_and_mismatches() {
        let r = read_rewards("pool,candidate,score\n1,1,0\n".as_bytes()).unwrap();
        let e = read_embeddings_csv("pool,candidate,v\n1,1,1\n".as_bytes()).unwrap();
        assert!(ContextualInstance::from_parts(r, e).is_err());
        let r = read_rewards(REWARDS.as_bytes()).unwrap();
        let e = read_embeddings_csv("pool,candidate,v\n1,1,1\n".as_bytes()).unwrap();
        assert!(ContextualInstance::from_parts(r, e).is_err());
    }

    #[test]
    fn synthetic_demo_shape() {
        let inst = synthetic_contextual(5, 20, 768, 0).unwrap();
        assert_eq!(inst.pools().len(), 5);
        assert!(inst.pools().iter().all(|p| p.candidates.len() == 20));
        assert_eq!(inst.dim(), 768);
        let flat = inst.to_instance().unwrap();
        assert_eq!(flat.candidates.k(), 100);
    }
}
