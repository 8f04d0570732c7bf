//! Observation data: a dense feature matrix plus one outcome column.
//!
//! Features are stored column-major because every consumer (the learners)
//! gathers whole columns for a feature subset.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("empty input: no data rows")]
    Empty,
    #[error("outcome column {0} not found")]
    MissingOutcome(String),
    #[error("outcome column {0} is ambiguous (appears more than once)")]
    DuplicateOutcome(String),
    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    Unparsable {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column {column}: non-finite value {value}")]
    NonFinite {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("row {row} has {found} cells, expected {expected}")]
    Ragged {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("non-binary outcome value {0}")]
    NonBinary(f64),
    #[error("binary outcome has a single class ({0})")]
    SingleClass(f64),
    #[error("need at least 2 observations, found {0}")]
    TooFewRows(usize),
    #[error("need at least 1 feature")]
    NoFeatures,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("split fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("split would leave an empty partition (train {train}, holdout {holdout})")]
    EmptyPartition { train: usize, holdout: usize },
    #[error("training partition contains a single outcome class")]
    SingleClassTrain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Continuous,
    Binary,
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutcomeKind::Continuous => f.write_str("continuous"),
            OutcomeKind::Binary => f.write_str("binary"),
        }
    }
}

/// How the outcome column is located in a CSV file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OutcomeColumn {
    Index(usize),
    Name(String),
}

impl fmt::Display for OutcomeColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutcomeColumn::Index(i) => write!(f, "#{i}"),
            OutcomeColumn::Name(s) => write!(f, "{s:?}"),
        }
    }
}

impl std::str::FromStr for OutcomeColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => OutcomeColumn::Index(i),
            Err(_) => OutcomeColumn::Name(s.to_string()),
        })
    }
}

/// N observations of p numeric features and one outcome. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<f64>,
    n_rows: usize,
    n_features: usize,
    outcome: Vec<f64>,
    outcome_kind: OutcomeKind,
    feature_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from row-major observations.
    pub fn from_rows(
        rows: &[Vec<f64>],
        outcome: Vec<f64>,
        outcome_kind: OutcomeKind,
        feature_names: Option<Vec<String>>,
    ) -> Result<Self, DataError> {
        let n_features = rows.first().map_or(0, Vec::len);
        let mut columns = vec![0.0; rows.len() * n_features];
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n_features {
                return Err(DataError::Ragged {
                    row: r,
                    found: row.len(),
                    expected: n_features,
                });
            }
            for (c, &v) in row.iter().enumerate() {
                columns[c * rows.len() + r] = v;
            }
        }
        Self::from_columns(columns, rows.len(), outcome, outcome_kind, feature_names)
    }

    /// Builds a dataset from a column-major buffer of `n_rows * p` values.
    pub fn from_columns(
        columns: Vec<f64>,
        n_rows: usize,
        outcome: Vec<f64>,
        outcome_kind: OutcomeKind,
        feature_names: Option<Vec<String>>,
    ) -> Result<Self, DataError> {
        if n_rows < 2 {
            return Err(DataError::TooFewRows(n_rows));
        }
        if outcome.len() != n_rows {
            return Err(DataError::Shape(format!(
                "outcome has {} values for {} rows",
                outcome.len(),
                n_rows
            )));
        }
        if !columns.len().is_multiple_of(n_rows) {
            return Err(DataError::Shape(format!(
                "{} values is not a multiple of {} rows",
                columns.len(),
                n_rows
            )));
        }
        let n_features = columns.len() / n_rows;
        if n_features == 0 {
            return Err(DataError::NoFeatures);
        }
        let feature_names =
            feature_names.unwrap_or_else(|| (0..n_features).map(|j| format!("f{j}")).collect());
        if feature_names.len() != n_features {
            return Err(DataError::Shape(format!(
                "{} feature names for {} features",
                feature_names.len(),
                n_features
            )));
        }
        for (j, col) in columns.chunks(n_rows).enumerate() {
            if let Some((r, &v)) = col.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(DataError::NonFinite {
                    row: r,
                    column: feature_names[j].clone(),
                    value: v,
                });
            }
        }
        if let Some((r, &v)) = outcome.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(DataError::NonFinite {
                row: r,
                column: "outcome".into(),
                value: v,
            });
        }
        if outcome_kind == OutcomeKind::Binary {
            check_binary(&outcome)?;
        }
        Ok(Self {
            columns,
            n_rows,
            n_features,
            outcome,
            outcome_kind,
            feature_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome_kind
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.columns[feature * self.n_rows + row]
    }

    /// Copies the given rows (in the given order) into a new, revalidated dataset.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self, DataError> {
        let g = self.gather_rows(rows);
        Self::from_columns(g.columns, g.n_rows, g.outcome, g.outcome_kind, Some(g.feature_names))
    }

    fn gather_rows(&self, rows: &[usize]) -> Self {
        let mut columns = Vec::with_capacity(rows.len() * self.n_features);
        for j in 0..self.n_features {
            let col = self.column(j);
            columns.extend(rows.iter().map(|&r| col[r]));
        }
        Self {
            columns,
            n_rows: rows.len(),
            n_features: self.n_features,
            outcome: rows.iter().map(|&r| self.outcome[r]).collect(),
            outcome_kind: self.outcome_kind,
            feature_names: self.feature_names.clone(),
        }
    }

    /// Writes the dataset as CSV with a header; the outcome is the last column.
    pub fn write_csv<W: Write>(&self, out: W, outcome_name: &str) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(outcome_name);
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.n_features + 1);
        for r in 0..self.n_rows {
            record.clear();
            record.extend((0..self.n_features).map(|j| self.value(r, j).to_string()));
            record.push(self.outcome[r].to_string());
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| DataError::Io {
            path: "<writer>".into(),
            source: e,
        })?;
        Ok(())
    }
}

fn check_binary(outcome: &[f64]) -> Result<(), DataError> {
    if let Some(&bad) = outcome.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(DataError::NonBinary(bad));
    }
    let ones = outcome.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 {
        return Err(DataError::SingleClass(0.0));
    }
    if ones == outcome.len() {
        return Err(DataError::SingleClass(1.0));
    }
    Ok(())
}

/// Loads a comma-separated file. The first row is a header if any of its
/// cells fails to parse as a number; otherwise every row is data and the
/// features get synthetic names `f0..`.
pub fn load_csv(
    path: impl AsRef<Path>,
    outcome_column: &OutcomeColumn,
    outcome_kind: OutcomeKind,
) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_csv(BufReader::new(file), outcome_column, outcome_kind)
}

pub fn read_csv<R: Read>(
    input: R,
    outcome_column: &OutcomeColumn,
    outcome_kind: OutcomeKind,
) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = reader.records();
    let first = match records.next() {
        Some(r) => r?,
        None => return Err(DataError::Empty),
    };
    let first: Vec<String> = first.iter().map(str::to_string).collect();
    let has_header = first.iter().any(|c| c.parse::<f64>().is_err());
    let width = first.len();

    let names: Vec<String> = if has_header {
        first.clone()
    } else {
        (0..width).map(|j| j.to_string()).collect()
    };

    let outcome_idx = match outcome_column {
        OutcomeColumn::Index(i) if *i < width => *i,
        OutcomeColumn::Index(_) => {
            return Err(DataError::MissingOutcome(outcome_column.to_string()))
        }
        OutcomeColumn::Name(name) => {
            let hits: Vec<usize> = names
                .iter()
                .enumerate()
                .filter(|(_, n)| *n == name)
                .map(|(i, _)| i)
                .collect();
            match hits.as_slice() {
                [] => return Err(DataError::MissingOutcome(name.clone())),
                [i] => *i,
                _ => return Err(DataError::DuplicateOutcome(name.clone())),
            }
        }
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut outcome = Vec::new();
    // 1-based line numbers in error messages.
    let mut push_row = |line: usize, cells: &[String]| -> Result<(), DataError> {
        if cells.len() != width {
            return Err(DataError::Ragged {
                row: line,
                found: cells.len(),
                expected: width,
            });
        }
        let mut row = Vec::with_capacity(width - 1);
        for (j, cell) in cells.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| DataError::Unparsable {
                row: line,
                column: names[j].clone(),
                value: cell.clone(),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    row: line,
                    column: names[j].clone(),
                    value: v,
                });
            }
            if j == outcome_idx {
                outcome.push(v);
            } else {
                row.push(v);
            }
        }
        rows.push(row);
        Ok(())
    };

    if !has_header {
        push_row(1, &first)?;
    }
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let cells: Vec<String> = rec.iter().map(str::to_string).collect();
        push_row(i + 2, &cells)?;
    }

    let feature_names: Vec<String> = if has_header {
        names
            .into_iter()
            .enumerate()
            .filter(|(j, _)| *j != outcome_idx)
            .map(|(_, n)| n)
            .collect()
    } else {
        (0..width - 1).map(|j| format!("f{j}")).collect()
    };
    Dataset::from_rows(&rows, outcome, outcome_kind, Some(feature_names))
}

/// A disjoint train/holdout partition of one dataset.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: Dataset,
    pub holdout: Dataset,
    pub train_rows: Vec<usize>,
    pub holdout_rows: Vec<usize>,
    pub fraction: f64,
    pub seed: u64,
}

/// Randomly assigns `round(fraction * N)` rows to training, the rest to holdout.
/// Rows keep their source order inside each partition.
pub fn split(ds: &Dataset, fraction: f64, seed: u64) -> Result<SplitPair, DataError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::BadFraction(fraction));
    }
    let n = ds.n_rows();
    let n_train = (fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(DataError::EmptyPartition {
            train: n_train,
            holdout: n.saturating_sub(n_train),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; n];
    for i in sample(&mut rng, n, n_train) {
        in_train[i] = true;
    }
    let train_rows: Vec<usize> = (0..n).filter(|&i| in_train[i]).collect();
    let holdout_rows: Vec<usize> = (0..n).filter(|&i| !in_train[i]).collect();
    if n_train < 2 {
        return Err(DataError::EmptyPartition {
            train: n_train,
            holdout: n - n_train,
        });
    }
    let train = ds.select_rows(&train_rows).map_err(|e| match e {
        DataError::SingleClass(_) => DataError::SingleClassTrain,
        other => other,
    })?;
    // The holdout is only scored, so it may hold one row or one class.
    let holdout = ds.gather_rows(&holdout_rows);
    Ok(SplitPair {
        train,
        holdout,
        train_rows,
        holdout_rows,
        fraction,
        seed,
    })
}
