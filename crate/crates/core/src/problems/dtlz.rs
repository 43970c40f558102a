use std::f64::consts::FRAC_2_PI;
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{sigmoid, Instance};
use crate::depgraph::SimilarityMetric;
use crate::{CandidateSet, Error, FeatureTable, PreferenceMatrix, Result};

/// Decision variables of the DTLZ problems used here.
pub const DTLZ_DECISION_DIMS: usize = 10;
/// Objectives of the DTLZ problems used here.
pub const DTLZ_OBJECTIVES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DtlzParams {
    pub n: usize,
    /// Width of the Gaussian utility around the designated winner.
    pub sigma: f64,
    /// Preference temperature.
    pub tau: f64,
    pub seed: u64,
}

impl Default for DtlzParams {
    fn default() -> Self {
        Self { n: 100, sigma: 0.3, tau: 0.2, seed: 0 }
    }
}

impl DtlzParams {
    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid(format!("need at least 2 points, got {}", self.n)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

/// A solution: decision vector and objective vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtlzPoint {
    pub x: Vec<f64>,
    pub f: Vec<f64>,
}

impl DtlzPoint {
    /// Decision vector followed by objectives.
    pub fn features(&self) -> Vec<f64> {
        self.x.iter().chain(&self.f).copied().collect()
    }
}

/// `n` points uniform on the first-octant unit sphere, i.e. the Pareto front
/// of 3-objective DTLZ2, with their decision vectors (distance variables at
/// their optimum 0.5).
pub fn dtlz2_front<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<DtlzPoint> {
    (0..n)
        .map(|_| {
            let g: [f64; 3] = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal).abs());
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let f: Vec<f64> = g.iter().map(|v| v / norm).collect();
            let mut x = vec![0.5; DTLZ_DECISION_DIMS];
            x[0] = FRAC_2_PI * f[2].clamp(0.0, 1.0).asin();
            x[1] = FRAC_2_PI * f[1].atan2(f[0]);
            DtlzPoint { x, f }
        })
        .collect()
}

/// Objectives of DTLZ2 at a decision vector.
pub fn dtlz2_objectives(x: &[f64]) -> Vec<f64> {
    let g: f64 = x[2..].iter().map(|v| (v - 0.5) * (v - 0.5)).sum();
    let half = std::f64::consts::FRAC_PI_2;
    let (a, b) = (x[0] * half, x[1] * half);
    vec![
        (1.0 + g) * a.cos() * b.cos(),
        (1.0 + g) * a.cos() * b.sin(),
        (1.0 + g) * a.sin(),
    ]
}

/// Reads externally sampled solutions: one row per point, the first
/// `decision_dims` columns are the decision vector and the rest objectives.
/// A non-numeric first row is a header.
pub fn read_points<R: Read>(reader: R, decision_dims: usize) -> Result<Vec<DtlzPoint>> {
    let mut csv = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (line, record) in csv.records().enumerate() {
        let record = record?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if line == 0 => continue,
            Err(_) => return Err(Error::data(format!("point line {} is not numeric", line + 1))),
        };
        if row.len() <= decision_dims || row.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "point line {} needs {decision_dims} decision values plus objectives",
                line + 1
            )));
        }
        let (x, f) = row.split_at(decision_dims);
        out.push(DtlzPoint { x: x.to_vec(), f: f.to_vec() });
    }
    Ok(out)
}

pub fn read_points_path(path: impl AsRef<Path>, decision_dims: usize) -> Result<Vec<DtlzPoint>> {
    read_points(std::fs::File::open(path)?, decision_dims)
}

/// Unnormalised Gaussian utility `exp(-|x - center|^2 / (2 sigma^2))`.
pub fn gaussian_utility(x: &[f64], center: &[f64], sigma: f64) -> f64 {
    let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

#[derive(Clone, Debug, PartialEq)]
pub enum DtlzSource {
    /// Sample the analytic DTLZ2 front.
    Dtlz2,
    /// Use the given solutions (for example a sampled DTLZ7 front).
    Points(Vec<DtlzPoint>),
}

/// Builds a preference instance over DTLZ solutions: one point is drawn as
/// the winner and `p_ij = sigmoid((u_i - u_j) / tau)` with a Gaussian
/// utility around it.
pub fn dtlz_instance(source: DtlzSource, params: DtlzParams) -> Result<Instance> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (name, points) = match source {
        DtlzSource::Dtlz2 => ("dtlz2", dtlz2_front(params.n, &mut rng)),
        DtlzSource::Points(points) => {
            if points.len() < 2 {
                return Err(Error::data("need at least 2 points"));
            }
            ("dtlz-file", points)
        }
    };
    let winner = rng.random_range(0..points.len());
    let center = points[winner].x.clone();
    let utility: Vec<f64> = points.iter().map(|p| gaussian_utility(&p.x, &center, params.sigma)).collect();
    let preferences = PreferenceMatrix::from_upper(points.len(), |i, j| sigmoid((utility[i] - utility[j]) / params.tau))?;
    let rows: Vec<Vec<f64>> = points.iter().map(DtlzPoint::features).collect();
    let features = FeatureTable::from_numeric_rows("v", &rows)?;
    let labels = (1..=points.len()).map(|i| format!("solution {i}")).collect();
    Ok(Instance {
        name: name.into(),
        candidates: CandidateSet::new(labels, Some(features))?,
        preferences,
        pool_of: None,
        metrics: vec![SimilarityMetric::EuclideanMinmax],
        designated_winner: Some(winner),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn front_points_lie_on_the_sphere_and_invert() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for p in dtlz2_front(50, &mut rng) {
            let norm: f64 = p.f.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
            assert!(p.f.iter().all(|&v| v >= 0.0));
            let back = dtlz2_objectives(&p.x);
            for (a, b) in back.iter().zip(&p.f) {
                assert!((a - b).abs() < 1e-9);
            }
            assert_eq!(p.features().len(), 13);
        }
    }

    #[test]
    fn designated_winner_is_condorcet() {
        for seed in 0..20 {
            let inst = dtlz_instance(DtlzSource::Dtlz2, DtlzParams { n: 30, seed, ..Default::default() }).unwrap();
            assert_eq!(crate::find_condorcet_winner(&inst.preferences), inst.designated_winner);
        }
    }

    #[test]
    fn same_seed_same_instance() {
        let params = DtlzParams { n: 12, seed: 7, ..Default::default() };
        let a = dtlz_instance(DtlzSource::Dtlz2, params).unwrap();
        let b = dtlz_instance(DtlzSource::Dtlz2, params).unwrap();
        assert_eq!(a.preferences, b.preferences);
        assert_eq!(a.candidates, b.candidates);
    }

    #[test]
    fn rejects_bad_parameters() {
        for params in [
            DtlzParams { sigma: 0.0, ..Default::default() },
            DtlzParams { tau: -1.0, ..Default::default() },
            DtlzParams { n: 1, ..Default::default() },
        ] {
            assert!(dtlz_instance(DtlzSource::Dtlz2, params).is_err());
        }
    }

    #[test]
    fn point_file_layout() {
        let text = "x1,x2,f1,f2\n0.1,0.2,1.0,2.0\n0.3,0.4,3.0,4.0\n";
        let pts = read_points(text.as_bytes(), 2).unwrap();
        assert_eq!(pts[1].f, vec![3.0, 4.0]);
        assert!(read_points(text.as_bytes(), 4).is_err());
    }
}
