//! Tabular survival data: ingestion, imputation, standardization and splitting.
//!
//! A [`Dataset`] holds one [`SurvivalRecord`] per subject. Raw CSV input goes
//! through [`RawTable`] (which still carries missing cells) and is turned into a
//! dataset by [`impute_missing`].

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved CSV column holding the observed duration (days).
pub const DURATION_COLUMN: &str = "y";
/// Reserved CSV column holding the event indicator.
pub const EVENT_COLUMN: &str = "delta";
/// Optional identifier column; not a covariate.
pub const ID_COLUMN: &str = "subject_id";

/// One subject: observed duration, event indicator and covariate row.
///
/// `event == true` means the event was observed (T <= C); `false` means the
/// duration is censored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub y: f64,
    pub event: bool,
    pub x: Vec<f64>,
}

impl SurvivalRecord {
    pub fn new(y: f64, event: bool, x: Vec<f64>) -> Result<Self> {
        if !(y >= 0.0) || !y.is_finite() {
            return Err(Error::InvalidData(format!("duration must be finite and >= 0, got {y}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("covariate row contains non-finite values".into()));
        }
        Ok(Self { y, event, x })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<SurvivalRecord>,
    pub names: Vec<String>,
    pub kinds: Vec<CovariateKind>,
}

impl Dataset {
    pub fn new(
        records: Vec<SurvivalRecord>,
        names: Vec<String>,
        kinds: Vec<CovariateKind>,
    ) -> Result<Self> {
        let d = names.len();
        if kinds.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: kinds.len(),
            });
        }
        for r in &records {
            if r.x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: r.x.len(),
                });
            }
        }
        for (j, kind) in kinds.iter().enumerate() {
            if *kind == CovariateKind::Binary
                && records.iter().any(|r| r.x[j] != 0.0 && r.x[j] != 1.0)
            {
                return Err(Error::InvalidData(format!(
                    "binary column `{}` holds values other than 0/1",
                    names[j]
                )));
            }
        }
        Ok(Self {
            records,
            names,
            kinds,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    /// Covariates as an `n x d` matrix.
    pub fn design(&self) -> Array2<f64> {
        let (n, d) = (self.len(), self.dim());
        Array2::from_shape_fn((n, d), |(i, j)| self.records[i].x[j])
    }

    /// `(duration, event)` pairs in record order.
    pub fn outcomes(&self) -> Vec<(f64, bool)> {
        self.records.iter().map(|r| (r.y, r.event)).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.x[j]).collect()
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            names: self.names.clone(),
            kinds: self.kinds.clone(),
        }
    }
}

/// Table as read from disk, before imputation. `cells` is row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub names: Vec<String>,
    pub y: Vec<f64>,
    pub event: Vec<bool>,
    pub cells: Vec<Vec<Option<f64>>>,
    /// Contents of the `subject_id` column, when present.
    pub ids: Option<Vec<String>>,
}

impl RawTable {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    /// A column is binary when its observed values are all 0 or 1.
    pub fn infer_kinds(&self) -> Vec<CovariateKind> {
        (0..self.dim())
            .map(|j| {
                let binary = self
                    .cells
                    .iter()
                    .filter_map(|row| row[j])
                    .all(|v| v == 0.0 || v == 1.0);
                if binary {
                    CovariateKind::Binary
                } else {
                    CovariateKind::Continuous
                }
            })
            .collect()
    }

    /// Inferred kinds with per-column overrides applied.
    pub fn kinds_with_overrides(
        &self,
        overrides: &BTreeMap<String, CovariateKind>,
    ) -> Result<Vec<CovariateKind>> {
        for name in overrides.keys() {
            if !self.names.contains(name) {
                return Err(Error::InvalidArgument(format!(
                    "kind override for unknown column `{name}`"
                )));
            }
        }
        Ok(self
            .infer_kinds()
            .into_iter()
            .zip(&self.names)
            .map(|(k, name)| overrides.get(name).copied().unwrap_or(k))
            .collect())
    }
}

fn parse_cell(raw: &str, column: &str, line: usize) -> Result<Option<f64>> {
    let s = raw.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::InvalidData(format!("line {line}, column `{column}`: cannot parse `{s}`")))
}

/// Reads a CSV with a header row, the reserved `y` and `delta` columns, and
/// any number of covariate columns. Empty covariate cells are missing values.
pub fn read_csv<R: Read>(reader: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidData(format!("missing required column `{name}`")))
    };
    let y_col = find(DURATION_COLUMN)?;
    let delta_col = find(EVENT_COLUMN)?;
    let id_col = headers.iter().position(|h| h == ID_COLUMN);
    let cov_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != y_col && c != delta_col && Some(c) != id_col)
        .collect();

    let mut table = RawTable {
        names: cov_cols.iter().map(|&c| headers[c].clone()).collect(),
        y: Vec::new(),
        event: Vec::new(),
        cells: Vec::new(),
        ids: id_col.map(|_| Vec::new()),
    };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let y = parse_cell(&rec[y_col], DURATION_COLUMN, line)?
            .ok_or_else(|| Error::InvalidData(format!("line {line}: missing duration")))?;
        if !(y >= 0.0) || !y.is_finite() {
            return Err(Error::InvalidData(format!("line {line}: duration must be >= 0")));
        }
        let event = match parse_cell(&rec[delta_col], EVENT_COLUMN, line)? {
            Some(v) if v == 1.0 => true,
            Some(v) if v == 0.0 => false,
            _ => {
                return Err(Error::InvalidData(format!(
                    "line {line}: `delta` must be 0 or 1"
                )))
            }
        };
        let row = cov_cols
            .iter()
            .map(|&c| parse_cell(&rec[c], &headers[c], line))
            .collect::<Result<Vec<_>>>()?;
        table.y.push(y);
        table.event.push(event);
        table.cells.push(row);
        if let (Some(c), Some(ids)) = (id_col, table.ids.as_mut()) {
            ids.push(rec[c].trim().to_string());
        }
    }
    Ok(table)
}

pub fn read_csv_path(path: impl AsRef<Path>) -> Result<RawTable> {
    read_csv(std::fs::File::open(path)?)
}

/// Writes a dataset in the same layout [`read_csv`] accepts.
pub fn write_csv<W: std::io::Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![DURATION_COLUMN.to_string(), EVENT_COLUMN.to_string()];
    header.extend(data.names.iter().cloned());
    w.write_record(&header)?;
    for r in &data.records {
        let mut row = vec![r.y.to_string(), u8::from(r.event).to_string()];
        row.extend(r.x.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Median of a non-empty slice; even counts average the two central values.
pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Most frequent value; ties go to the smaller value.
fn mode(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (mut best, mut best_count) = (v[0], 0usize);
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j < v.len() && v[j] == v[i] {
            j += 1;
        }
        if j - i > best_count {
            best = v[i];
            best_count = j - i;
        }
        i = j;
    }
    best
}

/// Fills missing cells: continuous columns with the median of observed values,
/// binary columns with the most frequent observed value.
pub fn impute_missing(raw: &RawTable, kinds: &[CovariateKind]) -> Result<Dataset> {
    let d = raw.dim();
    if kinds.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: kinds.len(),
        });
    }
    let mut fill = Vec::with_capacity(d);
    for j in 0..d {
        let observed: Vec<f64> = raw.cells.iter().filter_map(|row| row[j]).collect();
        if observed.is_empty() {
            return Err(Error::EmptyColumn(raw.names[j].clone()));
        }
        fill.push(match kinds[j] {
            CovariateKind::Continuous => median(&observed),
            CovariateKind::Binary => mode(&observed),
        });
    }
    let records = raw
        .cells
        .iter()
        .zip(raw.y.iter().zip(&raw.event))
        .map(|(row, (&y, &event))| {
            let x = row
                .iter()
                .zip(&fill)
                .map(|(cell, &f)| cell.unwrap_or(f))
                .collect();
            SurvivalRecord::new(y, event, x)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(records, raw.names.clone(), kinds.to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub mean: f64,
    pub sd: f64,
}

/// Per-column z-score parameters; `None` for columns left untouched (binary).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub columns: Vec<Option<ColumnScale>>,
}

/// Mean and standard deviation (divisor n-1) of every continuous column.
pub fn fit_standardizer(train: &Dataset) -> Result<StandardizationParams> {
    let n = train.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "standardization needs at least two training rows".into(),
        ));
    }
    let columns = (0..train.dim())
        .map(|j| {
            if train.kinds[j] == CovariateKind::Binary {
                return Ok(None);
            }
            let col = train.column(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let sd = var.sqrt();
            if !(sd > 0.0) {
                return Err(Error::ZeroVariance(train.names[j].clone()));
            }
            Ok(Some(ColumnScale { mean, sd }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StandardizationParams { columns })
}

impl StandardizationParams {
    pub fn transform_row(&self, x: &mut [f64]) {
        for (v, scale) in x.iter_mut().zip(&self.columns) {
            if let Some(s) = scale {
                *v = (*v - s.mean) / s.sd;
            }
        }
    }

    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.columns.len() {
            return Err(Error::DimensionMismatch {
                expected: self.columns.len(),
                actual: data.dim(),
            });
        }
        let mut out = data.clone();
        for r in &mut out.records {
            self.transform_row(&mut r.x);
        }
        Ok(out)
    }
}

/// Seeded random partition of `0..n` into sorted `(train, test)` index lists,
/// with `round(n * test_fraction)` test indices.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n_test = (n as f64 * test_fraction).round() as usize;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = perm[..n_test].to_vec();
    let mut train = perm[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

pub fn train_test_split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(data.len(), test_fraction, seed)?;
    Ok((data.subset(&train), data.subset(&test)))
}
