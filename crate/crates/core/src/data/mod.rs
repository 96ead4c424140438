//! Datasets: the in-memory table, synthetic generators, file loading and
//! train/validation splits.
//!
//! # File formats
//!
//! Data files are UTF-8 comma-separated text with a header row. The schema
//! sidecar is a JSON array with one entry per header column, in the same
//! order:
//!
//! ```json
//! [
//!   {"name": "age", "kind": "numerical"},
//!   {"name": "housing", "kind": "categorical", "levels": ["own", "rent", "free"]},
//!   {"name": "grade", "kind": "ordinal", "levels": ["low", "mid", "high"]},
//!   {"name": "class", "kind": "categorical", "levels": ["good", "bad"], "is_label": true}
//! ]
//! ```
//!
//! Levels are a closed world: a cell outside the listed levels is a load
//! error, while levels never used by the file still get a one-hot slot. At
//! most one column may be flagged `is_label`; it is kept aside and never
//! transformed.

mod io;
mod synthetic;

pub use io::{load_schema, load_table, parse_table};
pub use synthetic::{
    builtin, gen_circles, gen_spheres, gen_stripes, BUILTIN_DATASETS, CIRCLES_FACTOR,
    SYNTHETIC_NOISE, SYNTHETIC_ROWS,
};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::transforms::{ordinal_position, VariableKind, VariableSchema};
use crate::{rng_from_seed, Error, Matrix, Result};

/// Smallest table the pipeline accepts.
pub const MIN_ROWS: usize = 4;

/// Fraction of rows used for training.
pub const TRAIN_RATIO: f64 = 0.75;

/// Column storage. Categorical and ordinal columns hold level indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Coded(Vec<usize>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Coded(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Class label column, excluded from every transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct Label {
    pub name: String,
    pub values: Vec<String>,
}

/// A typed table of feature columns plus an optional label.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    schemas: Vec<VariableSchema>,
    columns: Vec<Column>,
    label: Option<Label>,
    n_rows: usize,
}

impl DataTable {
    pub fn new(schemas: Vec<VariableSchema>, columns: Vec<Column>, label: Option<Label>) -> Result<Self> {
        if schemas.len() != columns.len() {
            return Err(Error::Shape(format!(
                "{} schemas for {} columns",
                schemas.len(),
                columns.len()
            )));
        }
        if schemas.is_empty() {
            return Err(Error::InvalidData("table has no feature columns".into()));
        }
        let n_rows = columns[0].len();
        if n_rows < MIN_ROWS {
            return Err(Error::InsufficientRows {
                needed: MIN_ROWS,
                got: n_rows,
            });
        }
        for (schema, column) in schemas.iter().zip(&columns) {
            schema.validate()?;
            if column.len() != n_rows {
                return Err(Error::Shape(format!(
                    "column {:?} has {} rows, expected {n_rows}",
                    schema.name,
                    column.len()
                )));
            }
            match (&schema.kind, column) {
                (VariableKind::Numerical, Column::Numeric(v)) => {
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(Error::InvalidData(format!(
                            "column {:?} has non-finite values",
                            schema.name
                        )));
                    }
                }
                (VariableKind::Categorical { levels } | VariableKind::Ordinal { levels }, Column::Coded(v)) => {
                    if v.iter().any(|&c| c >= levels.len()) {
                        return Err(Error::InvalidData(format!(
                            "column {:?} has a level code out of range",
                            schema.name
                        )));
                    }
                }
                _ => {
                    return Err(Error::InvalidData(format!(
                        "column {:?} storage does not match its kind",
                        schema.name
                    )))
                }
            }
        }
        if let Some(label) = &label {
            if label.values.len() != n_rows {
                return Err(Error::Shape(format!(
                    "label has {} rows, expected {n_rows}",
                    label.values.len()
                )));
            }
        }
        Ok(Self {
            schemas,
            columns,
            label,
            n_rows,
        })
    }

    /// A table of numerical columns, one per matrix column.
    pub fn from_numeric(names: &[&str], data: &Matrix) -> Result<Self> {
        let schemas = names.iter().map(|n| VariableSchema::numerical(*n)).collect();
        let columns = data
            .column_iter()
            .map(|c| Column::Numeric(c.iter().copied().collect()))
            .collect();
        Self::new(schemas, columns, None)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.schemas.len()
    }

    pub fn schemas(&self) -> &[VariableSchema] {
        &self.schemas
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, l: usize) -> &Column {
        &self.columns[l]
    }

    pub fn label(&self) -> Option<&Label> {
        self.label.as_ref()
    }

    pub fn is_all_numeric(&self) -> bool {
        self.schemas.iter().all(VariableSchema::is_numerical)
    }

    /// Raw values of the given rows; every feature must be numerical.
    pub fn numeric_matrix(&self, rows: &[usize]) -> Result<Matrix> {
        let mut out = Matrix::zeros(rows.len(), self.n_features());
        for (l, (schema, column)) in self.schemas.iter().zip(&self.columns).enumerate() {
            match column {
                Column::Numeric(v) => {
                    for (i, &r) in rows.iter().enumerate() {
                        out[(i, l)] = v[r];
                    }
                }
                Column::Coded(_) => {
                    return Err(Error::UnsupportedSchema(format!(
                        "column {:?} is not numerical",
                        schema.name
                    )))
                }
            }
        }
        Ok(out)
    }

    /// Numerical encoding used by the linear and kernel baselines:
    /// numerical columns as-is, categorical columns one-hot expanded, ordinal
    /// columns as their position in `[0, 1]`.
    pub fn expanded_matrix(&self, rows: &[usize]) -> Matrix {
        let width: usize = self.schemas.iter().map(VariableSchema::input_width).sum();
        let mut out = Matrix::zeros(rows.len(), width);
        let mut offset = 0;
        for (schema, column) in self.schemas.iter().zip(&self.columns) {
            match (&schema.kind, column) {
                (_, Column::Numeric(v)) => {
                    for (i, &r) in rows.iter().enumerate() {
                        out[(i, offset)] = v[r];
                    }
                }
                (VariableKind::Ordinal { levels }, Column::Coded(v)) => {
                    for (i, &r) in rows.iter().enumerate() {
                        out[(i, offset)] = ordinal_position(v[r], levels.len());
                    }
                }
                (_, Column::Coded(v)) => {
                    for (i, &r) in rows.iter().enumerate() {
                        out[(i, offset + v[r])] = 1.0;
                    }
                }
            }
            offset += schema.input_width();
        }
        out
    }
}

/// Disjoint train/validation row indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPair {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub seed: u64,
}

/// Seeded uniform shuffle; the first `floor(ratio * n)` rows train.
pub fn split(table: &DataTable, ratio: f64, seed: u64) -> Result<SplitPair> {
    split_rows(table.n_rows(), ratio, seed)
}

pub fn split_rows(n: usize, ratio: f64, seed: u64) -> Result<SplitPair> {
    if n < MIN_ROWS {
        return Err(Error::InsufficientRows {
            needed: MIN_ROWS,
            got: n,
        });
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio {ratio} must lie in (0, 1)")));
    }
    let n_train = (ratio * n as f64).floor() as usize;
    if n_train < 2 || n - n_train < 2 {
        return Err(Error::InsufficientRows { needed: MIN_ROWS, got: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let mut train = idx[..n_train].to_vec();
    let mut validation = idx[n_train..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    Ok(SplitPair {
        train,
        validation,
        seed,
    })
}
