use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::{Error, PreferenceMatrix, Result};

/// Full rankings over `k` items, most preferred first, 0-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankingDataset {
    k: usize,
    orders: Vec<Vec<usize>>,
}

impl RankingDataset {
    pub fn new(k: usize, orders: Vec<Vec<usize>>) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("need at least 2 items, got {k}")));
        }
        if orders.is_empty() {
            return Err(Error::data("ranking dataset has no orders"));
        }
        for (r, order) in orders.iter().enumerate() {
            let mut seen = vec![false; k];
            let full = order.len() == k
                && order.iter().all(|&x| x < k && !std::mem::replace(&mut seen[x], true));
            if !full {
                return Err(Error::data(format!(
                    "order {} is not a full ranking of {k} items",
                    r + 1
                )));
            }
        }
        Ok(Self { k, orders })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn orders(&self) -> &[Vec<usize>] {
        &self.orders
    }

    /// One ranking per row as 1-based item ids; a non-numeric first row is a
    /// header. `k` is inferred from the first order.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut orders = Vec::new();
        for (line, record) in csv.records().enumerate() {
            let record = record?;
            let parsed: std::result::Result<Vec<usize>, _> =
                record.iter().map(str::parse::<usize>).collect();
            match parsed {
                Ok(ids) => {
                    if ids.contains(&0) {
                        return Err(Error::data(format!("ranking line {} uses 0; ids are 1-based", line + 1)));
                    }
                    orders.push(ids.into_iter().map(|x| x - 1).collect::<Vec<_>>());
                }
                Err(_) if line == 0 => continue,
                Err(_) => return Err(Error::data(format!("ranking line {} is not numeric", line + 1))),
            }
        }
        let k = orders.first().map_or(0, Vec::len);
        Self::new(k, orders)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    /// The `.order` layout distributed with the sushi preference data: a
    /// first line `<k> <n>`, then one line per order `<unused> <k> id...`
    /// with 0-based ids, most preferred first.
    pub fn from_order_reader<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = lines.next().ok_or_else(|| Error::data("empty order file"))??;
        let k: usize = header
            .split_whitespace()
            .next()
            .and_then(|x| x.parse().ok())
            .ok_or_else(|| Error::data("order file header must start with the item count"))?;
        let mut orders = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let nums: std::result::Result<Vec<usize>, _> =
                line.split_whitespace().map(str::parse::<usize>).collect();
            let nums = nums.map_err(|_| Error::data(format!("order line {} is not numeric", n + 2)))?;
            if nums.len() < 2 || nums[1] + 2 != nums.len() {
                return Err(Error::data(format!("order line {} has a wrong length field", n + 2)));
            }
            orders.push(nums[2..].to_vec());
        }
        Self::new(k, orders)
    }

    pub fn from_order_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_order_reader(std::fs::File::open(path)?)
    }

    /// `(winner, loser)` count matrix implied by all orders.
    pub fn pairwise_counts(&self) -> Vec<u64> {
        let k = self.k;
        let mut counts = vec![0u64; k * k];
        for order in &self.orders {
            for (a, &hi) in order.iter().enumerate() {
                for &lo in &order[a + 1..] {
                    counts[hi * k + lo] += 1;
                }
            }
        }
        counts
    }
}

/// `p_ij = wins_ij / (wins_ij + wins_ji)`; pairs never compared get 1/2.
pub fn matrix_from_counts(k: usize, counts: &[u64]) -> Result<PreferenceMatrix> {
    PreferenceMatrix::from_upper(k, |i, j| {
        let (w, l) = (counts[i * k + j], counts[j * k + i]);
        if w + l == 0 {
            0.5
        } else {
            w as f64 / (w + l) as f64
        }
    })
}

pub fn matrix_from_rankings(data: &RankingDataset) -> Result<PreferenceMatrix> {
    matrix_from_counts(data.k(), &data.pairwise_counts())
}

/// Pairwise judgements as `(winner, loser)` rows.
///
/// The CSV has a header and columns `user, winner, loser[, control]` with
/// 1-based item ids; rows whose control flag is `1` are attention checks and
/// are skipped.
pub fn pairwise_counts_from_csv<R: Read>(k: usize, reader: R) -> Result<Vec<u64>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let mut counts = vec![0u64; k * k];
    for (line, record) in csv.records().enumerate() {
        let record = record?;
        let field = |c: usize| -> Result<usize> {
            record
                .get(c)
                .and_then(|x| x.parse::<usize>().ok())
                .ok_or_else(|| Error::data(format!("pairwise line {} column {} is not an id", line + 2, c + 1)))
        };
        if record.get(3) == Some("1") {
            continue;
        }
        let (w, l) = (field(1)?, field(2)?);
        if w == 0 || l == 0 || w > k || l > k || w == l {
            return Err(Error::data(format!("pairwise line {} has invalid items ({w}, {l})", line + 2)));
        }
        counts[(w - 1) * k + (l - 1)] += 1;
    }
    Ok(counts)
}
