use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Binary,
    Categorical,
}

impl FromStr for ColumnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "numeric" | "num" => Ok(ColumnKind::Numeric),
            "binary" | "bin" => Ok(ColumnKind::Binary),
            "categorical" | "cat" => Ok(ColumnKind::Categorical),
            other => Err(Error::data(format!("unknown column kind `{other}`"))),
        }
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Binary => "binary",
            ColumnKind::Categorical => "categorical",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self { name: name.into(), kind }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureValue {
    Numeric(f64),
    Binary(bool),
    Categorical(String),
}

impl FeatureValue {
    pub fn kind(&self) -> ColumnKind {
        match self {
            FeatureValue::Numeric(_) => ColumnKind::Numeric,
            FeatureValue::Binary(_) => ColumnKind::Binary,
            FeatureValue::Categorical(_) => ColumnKind::Categorical,
        }
    }

    /// Numeric view: numbers as-is, binary as 0/1, categorical has none.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            FeatureValue::Numeric(x) => Some(*x),
            FeatureValue::Binary(b) => Some(if *b { 1.0 } else { 0.0 }),
            FeatureValue::Categorical(_) => None,
        }
    }

    fn parse(raw: &str, kind: ColumnKind) -> Result<Self> {
        let raw = raw.trim();
        match kind {
            ColumnKind::Numeric => raw
                .parse::<f64>()
                .map(FeatureValue::Numeric)
                .map_err(|_| Error::data(format!("`{raw}` is not a number"))),
            ColumnKind::Binary => match raw {
                "0" | "false" => Ok(FeatureValue::Binary(false)),
                "1" | "true" => Ok(FeatureValue::Binary(true)),
                _ => Err(Error::data(format!("`{raw}` is not a binary value (0/1)"))),
            },
            ColumnKind::Categorical => Ok(FeatureValue::Categorical(raw.to_string())),
        }
    }

    fn from_json(value: &serde_json::Value, kind: ColumnKind) -> Result<Self> {
        use serde_json::Value;
        match (kind, value) {
            (ColumnKind::Numeric, Value::Number(n)) => n
                .as_f64()
                .map(FeatureValue::Numeric)
                .ok_or_else(|| Error::data("numeric feature out of range")),
            (ColumnKind::Binary, Value::Bool(b)) => Ok(FeatureValue::Binary(*b)),
            (ColumnKind::Binary, Value::Number(n)) => match n.as_f64() {
                Some(0.0) => Ok(FeatureValue::Binary(false)),
                Some(1.0) => Ok(FeatureValue::Binary(true)),
                _ => Err(Error::data(format!("binary feature must be 0 or 1, got {n}"))),
            },
            (ColumnKind::Categorical, Value::String(s)) => Ok(FeatureValue::Categorical(s.clone())),
            (ColumnKind::Categorical, Value::Number(n)) => {
                Ok(FeatureValue::Categorical(n.to_string()))
            }
            (_, Value::String(s)) => Self::parse(s, kind),
            (kind, other) => Err(Error::data(format!("cannot read {other} as a {kind} feature"))),
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            FeatureValue::Numeric(x) => serde_json::json!(x),
            FeatureValue::Binary(b) => serde_json::json!(u8::from(*b)),
            FeatureValue::Categorical(s) => serde_json::json!(s),
        }
    }
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureValue::Numeric(x) => write!(f, "{x}"),
            FeatureValue::Binary(b) => write!(f, "{}", u8::from(*b)),
            FeatureValue::Categorical(s) => f.write_str(s),
        }
    }
}

/// Per-candidate descriptors with a typed column schema.
///
/// Serialized as `{"columns": [{"name", "kind"}], "rows": [[...]]}` where
/// binary cells are `0`/`1` and categorical cells are strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFeatureTable", into = "RawFeatureTable")]
pub struct FeatureTable {
    columns: Vec<Column>,
    rows: Vec<Vec<FeatureValue>>,
}

#[derive(Serialize, Deserialize)]
struct RawFeatureTable {
    columns: Vec<Column>,
    rows: Vec<Vec<serde_json::Value>>,
}

impl TryFrom<RawFeatureTable> for FeatureTable {
    type Error = Error;

    fn try_from(raw: RawFeatureTable) -> Result<Self> {
        let rows = raw
            .rows
            .iter()
            .map(|row| {
                if row.len() != raw.columns.len() {
                    return Err(Error::data(format!(
                        "feature row has {} values, expected {}",
                        row.len(),
                        raw.columns.len()
                    )));
                }
                row.iter()
                    .zip(&raw.columns)
                    .map(|(v, c)| FeatureValue::from_json(v, c.kind))
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;
        FeatureTable::new(raw.columns, rows)
    }
}

impl From<FeatureTable> for RawFeatureTable {
    fn from(table: FeatureTable) -> Self {
        RawFeatureTable {
            rows: table
                .rows
                .iter()
                .map(|row| row.iter().map(FeatureValue::to_json).collect())
                .collect(),
            columns: table.columns,
        }
    }
}

impl FeatureTable {
    pub fn new(columns: Vec<Column>, rows: Vec<Vec<FeatureValue>>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::data("feature table has no columns"));
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(Error::data(format!(
                    "feature row {} has {} values, expected {}",
                    r + 1,
                    row.len(),
                    columns.len()
                )));
            }
            for (value, column) in row.iter().zip(&columns) {
                if value.kind() != column.kind {
                    return Err(Error::data(format!(
                        "row {} column `{}`: expected {}, got {}",
                        r + 1,
                        column.name,
                        column.kind,
                        value.kind()
                    )));
                }
                if let FeatureValue::Numeric(x) = value {
                    if !x.is_finite() {
                        return Err(Error::data(format!(
                            "row {} column `{}` is not finite",
                            r + 1,
                            column.name
                        )));
                    }
                }
            }
        }
        Ok(Self { columns, rows })
    }

    /// Builds an all-numeric table with columns `prefix0..prefixD`.
    pub fn from_numeric_rows(prefix: &str, rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        let columns = (0..width)
            .map(|d| Column::new(format!("{prefix}{d}"), ColumnKind::Numeric))
            .collect();
        let rows = rows
            .iter()
            .map(|r| r.iter().map(|&x| FeatureValue::Numeric(x)).collect())
            .collect();
        Self::new(columns, rows)
    }

    /// Reads a CSV whose header cells are `name:kind`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let (labels, table) = Self::from_labeled_csv_reader(reader)?;
        if labels.is_some() {
            return Err(Error::data("unexpected `label` column in feature table"));
        }
        Ok(table)
    }

    /// Like [`FeatureTable::from_csv_reader`], but a column headed plain
    /// `label` supplies candidate labels instead of a feature.
    pub fn from_labeled_csv_reader<R: Read>(reader: R) -> Result<(Option<Vec<String>>, Self)> {
        let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut label_col = None;
        let mut columns = Vec::new();
        for (idx, cell) in csv.headers()?.iter().enumerate() {
            if cell == "label" && label_col.is_none() {
                label_col = Some(idx);
                continue;
            }
            let (name, kind) = cell.rsplit_once(':').ok_or_else(|| {
                Error::data(format!("feature header `{cell}` must look like name:kind"))
            })?;
            columns.push(Column::new(name, kind.parse()?));
        }
        let mut labels = label_col.map(|_| Vec::new());
        let mut rows = Vec::new();
        for record in csv.records() {
            let record = record?;
            let mut row = Vec::with_capacity(columns.len());
            let mut features = columns.iter();
            for (idx, cell) in record.iter().enumerate() {
                if Some(idx) == label_col {
                    labels.as_mut().expect("label column").push(cell.to_string());
                } else if let Some(column) = features.next() {
                    row.push(FeatureValue::parse(cell, column.kind)?);
                }
            }
            rows.push(row);
        }
        Ok((labels, Self::new(columns, rows)?))
    }

    pub fn from_labeled_csv_path(path: impl AsRef<std::path::Path>) -> Result<(Option<Vec<String>>, Self)> {
        Self::from_labeled_csv_reader(std::fs::File::open(path)?)
    }

    pub fn from_csv_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<FeatureValue>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[FeatureValue] {
        &self.rows[i]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_purely_numeric(&self) -> bool {
        self.columns.iter().all(|c| c.kind == ColumnKind::Numeric)
    }

    /// Per-column value range (max - min) over numeric columns; 0 elsewhere.
    pub fn numeric_ranges(&self) -> Vec<f64> {
        (0..self.columns.len())
            .map(|c| {
                if self.columns[c].kind != ColumnKind::Numeric {
                    return 0.0;
                }
                let (lo, hi) = self
                    .rows
                    .iter()
                    .filter_map(|r| r[c].as_f64())
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                        (lo.min(x), hi.max(x))
                    });
                if lo.is_finite() {
                    hi - lo
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Rows as plain numbers when no categorical column exists.
    pub fn numeric_rows(&self) -> Option<Vec<Vec<f64>>> {
        self.rows
            .iter()
            .map(|r| r.iter().map(FeatureValue::as_f64).collect())
            .collect()
    }

    /// Short human-readable description of one row, used by annotator prompts
    /// and the UI.
    pub fn describe(&self, i: usize) -> String {
        self.columns
            .iter()
            .zip(&self.rows[i])
            .map(|(c, v)| format!("{} {}", c.name, v))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "style:binary,group:categorical,price:numeric\n1,tuna,4.49\n0,roll,1.2\n";

    #[test]
    fn parses_typed_header() {
        let table = FeatureTable::from_csv_reader(CSV.as_bytes()).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table.columns()[1].kind, ColumnKind::Categorical);
        assert_eq!(table.row(0)[0], FeatureValue::Binary(true));
        assert_eq!(table.row(1)[2], FeatureValue::Numeric(1.2));
        assert!(!table.is_purely_numeric());
        assert!(table.numeric_rows().is_none());
        let ranges = table.numeric_ranges();
        assert!((ranges[2] - 3.29).abs() < 1e-12);
        assert_eq!(ranges[0], 0.0);
    }

    #[test]
    fn rejects_bad_binary_and_missing_kind() {
        let bad = "flag:binary\n2\n";
        assert!(FeatureTable::from_csv_reader(bad.as_bytes()).is_err());
        let no_kind = "flag\n1\n";
        assert!(FeatureTable::from_csv_reader(no_kind.as_bytes()).is_err());
        let nan = "x:numeric\nNaN\n";
        assert!(FeatureTable::from_csv_reader(nan.as_bytes()).is_err());
    }

    #[test]
    fn label_column_is_split_off() {
        let csv = "label,style:binary,price:numeric\ntoro,1,4.49\nkappa,0,1.0\n";
        let (labels, table) = FeatureTable::from_labeled_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(labels.unwrap(), vec!["toro", "kappa"]);
        assert_eq!(table.columns().len(), 2);
        assert!(FeatureTable::from_csv_reader(csv.as_bytes()).is_err());
    }

    #[test]
    fn json_round_trip_keeps_kinds() {
        let table = FeatureTable::from_csv_reader(CSV.as_bytes()).unwrap();
        let json = serde_json::to_string(&table).unwrap();
        assert!(json.contains("\"tuna\""));
        let back: FeatureTable = serde_json::from_str(&json).unwrap();
        assert_eq!(back, table);
    }
}
