//! Dense, named community × feature matrices and their on-disk form.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::window::WindowKind;

pub const MATRIX_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("row {row} has {got} values, expected {expected}")]
    Ragged { row: usize, got: usize, expected: usize },
    #[error("duplicate column {0}")]
    DuplicateColumn(String),
    #[error("duplicate community {0}")]
    DuplicateRow(String),
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("non-finite value in row {row}, column {column}")]
    NonFinite { row: String, column: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad value {value:?} in row {row}")]
    Parse { row: usize, value: String },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub window: Option<WindowKind>,
    pub blocks: Vec<String>,
    /// True when some block (e.g. the TF-IDF vocabulary) was fitted on every
    /// row; such a matrix must not be scored by cross-validation directly.
    pub corpus_fitted: bool,
    pub vocab_size: usize,
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub communities: Vec<String>,
    pub columns: Vec<String>,
    /// Row-major, one row per community.
    pub rows: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl FeatureMatrix {
    pub fn new(communities: Vec<String>, columns: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, MatrixError> {
        let m = Self { communities, columns, rows, provenance: Provenance { schema_version: MATRIX_SCHEMA_VERSION, ..Default::default() } };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<(), MatrixError> {
        if self.rows.len() != self.communities.len() {
            return Err(MatrixError::Ragged { row: self.rows.len(), got: self.rows.len(), expected: self.communities.len() });
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.columns {
            if !seen.insert(c) {
                return Err(MatrixError::DuplicateColumn(c.clone()));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.communities {
            if !seen.insert(c) {
                return Err(MatrixError::DuplicateRow(c.clone()));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(MatrixError::Ragged { row: i, got: row.len(), expected: self.columns.len() });
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(MatrixError::NonFinite { row: self.communities[i].clone(), column: self.columns[j].clone() });
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn row_of(&self, community: &str) -> Option<&[f64]> {
        let i = self.communities.iter().position(|c| c == community)?;
        Some(&self.rows[i])
    }

    /// Rows reordered (or subset) to follow `names`; each column list is
    /// resolved by name.
    pub fn select_columns(&self, names: &[String]) -> Result<FeatureMatrix, MatrixError> {
        let idx = names
            .iter()
            .map(|n| self.column_index(n).ok_or_else(|| MatrixError::MissingColumn(n.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FeatureMatrix {
            communities: self.communities.clone(),
            columns: names.to_vec(),
            rows: self.rows.iter().map(|r| idx.iter().map(|&j| r[j]).collect()).collect(),
            provenance: self.provenance.clone(),
        })
    }

    /// Columns whose name starts with `prefix`, in matrix order.
    pub fn columns_with_prefix(&self, prefix: &str) -> Vec<String> {
        self.columns.iter().filter(|c| c.starts_with(prefix)).cloned().collect()
    }

    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            communities: indices.iter().map(|&i| self.communities[i].clone()).collect(),
            columns: self.columns.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Header `community,<columns...>`; floats use shortest round-trip form.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), MatrixError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["community".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (c, row) in self.communities.iter().zip(&self.rows) {
            let mut rec = vec![c.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<FeatureMatrix, MatrixError> {
        let mut r = csv::Reader::from_reader(reader);
        let columns: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
        let mut communities = Vec::new();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            communities.push(rec.get(0).unwrap_or_default().to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|_| MatrixError::Parse { row: i, value: v.to_string() }))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        FeatureMatrix::new(communities, columns, rows)
    }

    pub fn write_sidecar<W: Write>(&self, writer: W) -> Result<(), MatrixError> {
        serde_json::to_writer_pretty(writer, &self.provenance)?;
        Ok(())
    }

    pub fn read_sidecar<R: Read>(reader: R) -> Result<Provenance, MatrixError> {
        Ok(serde_json::from_reader(reader)?)
    }
}
