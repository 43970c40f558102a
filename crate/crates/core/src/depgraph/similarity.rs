use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{Column, ColumnKind, FeatureTable, FeatureValue};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityMetric {
    Gower,
    EuclideanMinmax,
    Cosine,
}

impl FromStr for SimilarityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gower" => Ok(Self::Gower),
            "euclidean" | "euclidean-minmax" => Ok(Self::EuclideanMinmax),
            "cosine" => Ok(Self::Cosine),
            other => Err(Error::invalid(format!("unknown similarity metric `{other}`"))),
        }
    }
}

impl fmt::Display for SimilarityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gower => "gower",
            Self::EuclideanMinmax => "euclidean-minmax",
            Self::Cosine => "cosine",
        })
    }
}

/// Symmetric K x K similarity in `[0, 1]` with unit diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    k: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_fn<F: FnMut(usize, usize) -> f64>(k: usize, mut f: F) -> Self {
        let mut values = vec![1.0; k * k];
        for i in 0..k {
            for j in (i + 1)..k {
                let s = f(i, j);
                values[i * k + j] = s;
                values[j * k + i] = s;
            }
        }
        Self { k, values }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.k + j]
    }

    /// Largest off-diagonal similarity, or 0 for a single candidate.
    pub fn max_off_diagonal(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.k {
            for j in (i + 1)..self.k {
                best = best.max(self.get(i, j));
            }
        }
        best
    }
}

/// Gower distance between two rows: the mean over columns of `|a - b| / range`
/// for numeric columns (zero-range columns contribute 0) and a 0/1 mismatch
/// for binary and categorical columns.
pub fn gower_distance(
    a: &[FeatureValue],
    b: &[FeatureValue],
    columns: &[Column],
    ranges: &[f64],
) -> Result<f64> {
    if columns.is_empty() {
        return Err(Error::invalid("gower distance needs at least one column"));
    }
    if a.len() != columns.len() || b.len() != columns.len() || ranges.len() != columns.len() {
        return Err(Error::invalid("row width does not match the feature schema"));
    }
    let mut total = 0.0;
    for (c, column) in columns.iter().enumerate() {
        let d = match (column.kind, &a[c], &b[c]) {
            (ColumnKind::Numeric, FeatureValue::Numeric(x), FeatureValue::Numeric(y)) => {
                if ranges[c] > 0.0 {
                    ((x - y).abs() / ranges[c]).min(1.0)
                } else {
                    0.0
                }
            }
            (ColumnKind::Binary, FeatureValue::Binary(x), FeatureValue::Binary(y)) => {
                f64::from(u8::from(x != y))
            }
            (ColumnKind::Categorical, FeatureValue::Categorical(x), FeatureValue::Categorical(y)) => {
                f64::from(u8::from(x != y))
            }
            _ => {
                return Err(Error::invalid(format!(
                    "column `{}` value kinds do not match the schema",
                    column.name
                )))
            }
        };
        total += d;
    }
    Ok(total / columns.len() as f64)
}

/// `1 - gower_distance` for every pair of rows.
pub fn gower_similarity(table: &FeatureTable) -> Result<SimilarityMatrix> {
    let ranges = table.numeric_ranges();
    let k = table.len();
    let mut values = vec![1.0; k * k];
    for i in 0..k {
        for j in (i + 1)..k {
            let d = gower_distance(table.row(i), table.row(j), table.columns(), &ranges)?;
            values[i * k + j] = 1.0 - d;
            values[j * k + i] = 1.0 - d;
        }
    }
    Ok(SimilarityMatrix { k, values })
}

/// Similarity over purely numeric rows.
///
/// * `EuclideanMinmax`: every column is min-max scaled to `[0, 1]`, then
///   `s = 1 - d / d_max` with `d_max` the largest pairwise distance.
/// * `Cosine`: `s = (1 + cos) / 2`; a zero vector is treated as orthogonal to
///   everything except an identical row.
pub fn numeric_similarity(rows: &[Vec<f64>], metric: SimilarityMetric) -> Result<SimilarityMatrix> {
    let k = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::invalid("numeric rows have different widths"));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::invalid("numeric features must be finite"));
    }
    match metric {
        SimilarityMetric::EuclideanMinmax => {
            let scaled = min_max_scale(rows, width);
            let mut dist = vec![0.0; k * k];
            let mut d_max = 0.0f64;
            for i in 0..k {
                for j in (i + 1)..k {
                    let d = scaled[i]
                        .iter()
                        .zip(&scaled[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    dist[i * k + j] = d;
                    d_max = d_max.max(d);
                }
            }
            Ok(SimilarityMatrix::from_fn(k, |i, j| {
                if d_max > 0.0 {
                    1.0 - dist[i * k + j] / d_max
                } else {
                    1.0
                }
            }))
        }
        SimilarityMetric::Cosine => Ok(SimilarityMatrix::from_fn(k, |i, j| {
            let (a, b) = (&rows[i], &rows[j]);
            if a == b {
                return 1.0;
            }
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                return 0.5;
            }
            let cos = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
            (1.0 + cos.clamp(-1.0, 1.0)) / 2.0
        })),
        SimilarityMetric::Gower => Err(Error::invalid(
            "gower similarity needs a typed feature table",
        )),
    }
}

fn min_max_scale(rows: &[Vec<f64>], width: usize) -> Vec<Vec<f64>> {
    let mut lo = vec![f64::INFINITY; width];
    let mut hi = vec![f64::NEG_INFINITY; width];
    for row in rows {
        for (c, &x) in row.iter().enumerate() {
            lo[c] = lo[c].min(x);
            hi[c] = hi[c].max(x);
        }
    }
    rows.iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(c, &x)| {
                    let range = hi[c] - lo[c];
                    if range > 0.0 {
                        (x - lo[c]) / range
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Similarity for a feature table. With no explicit metric, Gower is used
/// whenever a non-numeric column exists and Euclidean-minmax otherwise.
pub fn similarity_for_table(
    table: &FeatureTable,
    metric: Option<SimilarityMetric>,
) -> Result<(SimilarityMatrix, SimilarityMetric)> {
    let metric = metric.unwrap_or(if table.is_purely_numeric() {
        SimilarityMetric::EuclideanMinmax
    } else {
        SimilarityMetric::Gower
    });
    let sim = match metric {
        SimilarityMetric::Gower => gower_similarity(table)?,
        other => {
            let rows = table.numeric_rows().ok_or_else(|| {
                Error::invalid(format!("{other} similarity needs numeric features"))
            })?;
            numeric_similarity(&rows, other)?
        }
    };
    Ok((sim, metric))
}
