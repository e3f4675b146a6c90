//! Panels of equally spaced time series and matching static outcomes.
//!
//! Both inputs are wide CSV files keyed by a leading `subject` column:
//!
//! ```text
//! subject,t1,t2,...,tT          subject,<name1>,...,<nameP>
//! s01,0.12,-0.40,...            s01,394,11,...
//! ```
//!
//! Subject order is taken from the series file and outcomes are re-sorted
//! to match it.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("format error in {source_name}: {message}")]
    Format { source_name: String, message: String },
    #[error("subject mismatch: {0}")]
    Join(String),
    #[error("non-finite value in {source_name} at line {line}, column `{column}`")]
    Value {
        source_name: String,
        line: usize,
        column: String,
    },
    #[error("outcome variable `{0}` has zero sample variance")]
    DegenerateColumn(String),
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// N subjects observed at the same T equally spaced time points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesPanel {
    subjects: Vec<String>,
    series: Vec<Vec<f64>>,
    sampling_note: String,
}

impl TimeSeriesPanel {
    pub const MIN_LEN: usize = 4;

    pub fn new(subjects: Vec<String>, series: Vec<Vec<f64>>) -> Result<Self, DatasetError> {
        if subjects.len() != series.len() {
            return Err(DatasetError::Shape(format!(
                "{} subject ids for {} series",
                subjects.len(),
                series.len()
            )));
        }
        if series.len() < 2 {
            return Err(DatasetError::Shape(format!(
                "need at least 2 subjects, got {}",
                series.len()
            )));
        }
        let len = series[0].len();
        if len < Self::MIN_LEN {
            return Err(DatasetError::Shape(format!(
                "series length {len} is below the minimum of {}",
                Self::MIN_LEN
            )));
        }
        for (j, row) in series.iter().enumerate() {
            if row.len() != len {
                return Err(DatasetError::Format {
                    source_name: "panel".into(),
                    message: format!(
                        "subject `{}` has {} samples, expected {len}",
                        subjects[j],
                        row.len()
                    ),
                });
            }
            if let Some(t) = row.iter().position(|x| !x.is_finite()) {
                return Err(DatasetError::Value {
                    source_name: "panel".into(),
                    line: j + 2,
                    column: format!("t{}", t + 1),
                });
            }
        }
        check_unique(&subjects, "panel")?;
        Ok(Self {
            subjects,
            series,
            sampling_note: String::new(),
        })
    }

    pub fn with_sampling_note(mut self, note: impl Into<String>) -> Self {
        self.sampling_note = note.into();
        self
    }

    pub fn n_subjects(&self) -> usize {
        self.series.len()
    }

    pub fn len(&self) -> usize {
        self.series[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn series(&self, j: usize) -> &[f64] {
        &self.series[j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.series.iter().map(Vec::as_slice)
    }

    pub fn sampling_note(&self) -> &str {
        &self.sampling_note
    }
}

/// N × P matrix of static outcomes with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeMatrix {
    subjects: Vec<String>,
    variable_names: Vec<String>,
    values: DMatrix<f64>,
    standardized: bool,
}

impl OutcomeMatrix {
    pub fn new(
        subjects: Vec<String>,
        variable_names: Vec<String>,
        values: DMatrix<f64>,
    ) -> Result<Self, DatasetError> {
        if values.nrows() != subjects.len() || values.ncols() != variable_names.len() {
            return Err(DatasetError::Shape(format!(
                "outcome matrix is {}x{} but has {} subject ids and {} names",
                values.nrows(),
                values.ncols(),
                subjects.len(),
                variable_names.len()
            )));
        }
        if variable_names.is_empty() {
            return Err(DatasetError::Shape("need at least one outcome".into()));
        }
        for j in 0..values.nrows() {
            for p in 0..values.ncols() {
                if !values[(j, p)].is_finite() {
                    return Err(DatasetError::Value {
                        source_name: "outcomes".into(),
                        line: j + 2,
                        column: variable_names[p].clone(),
                    });
                }
            }
        }
        check_unique(&subjects, "outcomes")?;
        Ok(Self {
            subjects,
            variable_names,
            values,
            standardized: false,
        })
    }

    /// Unnamed outcomes `z1..zP` for subjects `s1..sN`.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self, DatasetError> {
        let subjects = (1..=values.nrows()).map(|j| format!("s{j}")).collect();
        let names = (1..=values.ncols()).map(|p| format!("z{p}")).collect();
        Self::new(subjects, names, values)
    }

    pub fn n_subjects(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_outcomes(&self) -> usize {
        self.values.ncols()
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Rows reordered to follow `order`, which must be a permutation of the
    /// subject ids.
    pub fn reordered(&self, order: &[String]) -> Result<Self, DatasetError> {
        let index: HashMap<&str, usize> = self
            .subjects
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let missing: Vec<&str> = order
            .iter()
            .filter(|s| !index.contains_key(s.as_str()))
            .map(String::as_str)
            .collect();
        if !missing.is_empty() {
            return Err(DatasetError::Join(format!(
                "no outcomes for subject(s) {}",
                missing.join(", ")
            )));
        }
        if order.len() != self.subjects.len() {
            let wanted: HashSet<&str> = order.iter().map(String::as_str).collect();
            let extra: Vec<&str> = self
                .subjects
                .iter()
                .map(String::as_str)
                .filter(|s| !wanted.contains(s))
                .collect();
            return Err(DatasetError::Join(format!(
                "outcomes for subject(s) {} have no series",
                extra.join(", ")
            )));
        }
        let rows: Vec<usize> = order.iter().map(|s| index[s.as_str()]).collect();
        let values = DMatrix::from_fn(rows.len(), self.n_outcomes(), |i, p| {
            self.values[(rows[i], p)]
        });
        Ok(Self {
            subjects: order.to_vec(),
            variable_names: self.variable_names.clone(),
            values,
            standardized: self.standardized,
        })
    }
}

fn check_unique(subjects: &[String], source_name: &str) -> Result<(), DatasetError> {
    let mut seen = HashSet::new();
    for s in subjects {
        if !seen.insert(s.as_str()) {
            return Err(DatasetError::Join(format!(
                "subject `{s}` appears more than once in {source_name}"
            )));
        }
    }
    Ok(())
}

/// Centers each outcome and scales it to unit sample variance (N-1
/// denominator).
pub fn standardize_outcomes(z: &OutcomeMatrix) -> Result<OutcomeMatrix, DatasetError> {
    let n = z.n_subjects();
    if n < 2 {
        return Err(DatasetError::Shape("standardization needs N >= 2".into()));
    }
    let mut values = z.values.clone();
    for (p, mut col) in values.column_iter_mut().enumerate() {
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        if var <= 0.0 || !var.is_finite() {
            return Err(DatasetError::DegenerateColumn(z.variable_names[p].clone()));
        }
        let sd = var.sqrt();
        col.iter_mut().for_each(|x| *x = (*x - mean) / sd);
    }
    Ok(OutcomeMatrix {
        subjects: z.subjects.clone(),
        variable_names: z.variable_names.clone(),
        values,
        standardized: true,
    })
}

/// Reads a series CSV (`subject,t1,...,tT`) and an outcome CSV
/// (`subject,<names...>`), returning both aligned to the series order.
pub fn load_panel(
    series_path: impl AsRef<Path>,
    outcomes_path: impl AsRef<Path>,
) -> Result<(TimeSeriesPanel, OutcomeMatrix), DatasetError> {
    let panel = load_series(series_path)?;
    let outcomes = load_outcomes(outcomes_path)?;
    let outcomes = outcomes.reordered(panel.subjects())?;
    Ok((panel, outcomes))
}

pub fn load_series(path: impl AsRef<Path>) -> Result<TimeSeriesPanel, DatasetError> {
    let path = path.as_ref();
    read_series(open(path)?, &path.display().to_string())
}

pub fn load_outcomes(path: impl AsRef<Path>) -> Result<OutcomeMatrix, DatasetError> {
    let path = path.as_ref();
    read_outcomes(open(path)?, &path.display().to_string())
}

fn open(path: &Path) -> Result<File, DatasetError> {
    File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

struct WideTable {
    header: Vec<String>,
    subjects: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_wide<R: Read>(reader: R, source_name: &str) -> Result<WideTable, DatasetError> {
    let format_err = |message: String| DatasetError::Format {
        source_name: source_name.to_string(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("subject") {
        return Err(format_err("first header column must be `subject`".into()));
    }
    if header.len() < 2 {
        return Err(format_err("no value columns".into()));
    }
    let mut subjects = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(i + 2, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(format_err(format!(
                "line {line} has {} fields, header has {}",
                record.len(),
                header.len()
            )));
        }
        subjects.push(record[0].to_string());
        let mut row = Vec::with_capacity(header.len() - 1);
        for (c, field) in record.iter().enumerate().skip(1) {
            let value: f64 = field.parse().map_err(|_| {
                format_err(format!(
                    "line {line}, column `{}`: cannot parse `{field}` as a number",
                    header[c]
                ))
            })?;
            if !value.is_finite() {
                return Err(DatasetError::Value {
                    source_name: source_name.to_string(),
                    line,
                    column: header[c].clone(),
                });
            }
            row.push(value);
        }
        rows.push(row);
    }
    Ok(WideTable {
        header,
        subjects,
        rows,
    })
}

pub fn read_series<R: Read>(reader: R, source_name: &str) -> Result<TimeSeriesPanel, DatasetError> {
    let table = read_wide(reader, source_name)?;
    TimeSeriesPanel::new(table.subjects, table.rows).map_err(|e| match e {
        DatasetError::Format { message, .. } => DatasetError::Format {
            source_name: source_name.to_string(),
            message,
        },
        DatasetError::Join(m) => DatasetError::Join(format!("{m} ({source_name})")),
        other => other,
    })
}

pub fn read_outcomes<R: Read>(reader: R, source_name: &str) -> Result<OutcomeMatrix, DatasetError> {
    let table = read_wide(reader, source_name)?;
    let n = table.rows.len();
    let p = table.header.len() - 1;
    let values = DMatrix::from_fn(n, p, |j, c| table.rows[j][c]);
    OutcomeMatrix::new(table.subjects, table.header[1..].to_vec(), values)
}

/// Writes the panel in the wide series layout. Values use the shortest
/// representation that round-trips exactly.
pub fn write_panel<W: Write>(panel: &TimeSeriesPanel, writer: W) -> Result<(), DatasetError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["subject".to_string()];
    header.extend((1..=panel.len()).map(|t| format!("t{t}")));
    wtr.write_record(&header)?;
    for (subject, row) in panel.subjects.iter().zip(&panel.series) {
        let mut record = vec![subject.clone()];
        record.extend(row.iter().map(|x| x.to_string()));
        wtr.write_record(&record)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_outcomes<W: Write>(z: &OutcomeMatrix, writer: W) -> Result<(), DatasetError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["subject".to_string()];
    header.extend(z.variable_names.iter().cloned());
    wtr.write_record(&header)?;
    for (j, subject) in z.subjects.iter().enumerate() {
        let mut record = vec![subject.clone()];
        record.extend(z.values.row(j).iter().map(|x| x.to_string()));
        wtr.write_record(&record)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}
