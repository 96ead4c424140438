//! Per-variable transformations.
//!
//! Each input variable `l` owns one small network mapping its encoding (a
//! scalar for numerical and ordinal columns, a one-hot vector for categorical
//! columns) to a single output value. All network weights live in one flat
//! [`ParamVector`] so that an optimizer can perturb them as a whole; variable
//! `l` only ever reads its own contiguous segment.

use std::collections::HashSet;
use std::ops::Range;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Column, DataTable};
use crate::pca::{self, PcaModel, STD_FLOOR};
use crate::{rng_from_seed, Error, Matrix, Result};

/// Hidden layer width of every transformation network.
pub const HIDDEN_UNITS: usize = 64;

/// Variable type, with the closed set of levels for non-numerical columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VariableKind {
    Numerical,
    Categorical { levels: Vec<String> },
    /// Levels listed from lowest to highest rank.
    Ordinal { levels: Vec<String> },
}

/// One entry of the schema sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSchema {
    pub name: String,
    #[serde(flatten)]
    pub kind: VariableKind,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub is_label: bool,
}

impl VariableSchema {
    pub fn numerical(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Numerical,
            is_label: false,
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Categorical {
                levels: levels.into_iter().map(Into::into).collect(),
            },
            is_label: false,
        }
    }

    pub fn ordinal<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Ordinal {
                levels: levels.into_iter().map(Into::into).collect(),
            },
            is_label: false,
        }
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.kind {
            VariableKind::Numerical => None,
            VariableKind::Categorical { levels } | VariableKind::Ordinal { levels } => Some(levels),
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self.kind, VariableKind::Numerical)
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, VariableKind::Categorical { .. })
    }

    /// Width of the network input for this variable.
    pub fn input_width(&self) -> usize {
        match &self.kind {
            VariableKind::Categorical { levels } => levels.len(),
            _ => 1,
        }
    }

    pub fn level_index(&self, value: &str) -> Result<usize> {
        self.levels()
            .and_then(|levels| levels.iter().position(|l| l == value))
            .ok_or_else(|| Error::UnknownLevel {
                column: self.name.clone(),
                value: value.to_string(),
            })
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(levels) = self.levels() {
            if levels.is_empty() {
                return Err(Error::Config(format!("column {:?} has no levels", self.name)));
            }
            let mut seen = HashSet::new();
            for l in levels {
                if !seen.insert(l) {
                    return Err(Error::Config(format!(
                        "column {:?} lists level {l:?} twice",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Position of an ordinal level mapped uniformly onto `[0, 1]`.
pub fn ordinal_position(rank: usize, n_levels: usize) -> f64 {
    if n_levels <= 1 {
        0.0
    } else {
        rank as f64 / (n_levels - 1) as f64
    }
}

/// Shape of one single-hidden-layer ReLU network with scalar output.
///
/// Parameters are laid out as `[W1 (hidden x input, row-major), b1, w2, b2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransformNet {
    pub input_width: usize,
    pub hidden: usize,
}

impl TransformNet {
    pub fn param_count(&self) -> usize {
        self.input_width * self.hidden + self.hidden + self.hidden + 1
    }

    pub fn forward_one(&self, params: &[f64], input: &[f64]) -> f64 {
        let (w1, rest) = params.split_at(self.input_width * self.hidden);
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, b2) = rest.split_at(self.hidden);
        let mut out = b2[0];
        for j in 0..self.hidden {
            let row = &w1[j * self.input_width..(j + 1) * self.input_width];
            let mut a = b1[j];
            for (w, x) in row.iter().zip(input) {
                a += w * x;
            }
            if a > 0.0 {
                out += w2[j] * a;
            }
        }
        out
    }
}

/// Flat parameter vector of all transformation networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// The `p` transformation networks aligned with the feature schemas.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformStack {
    schemas: Vec<VariableSchema>,
    nets: Vec<TransformNet>,
    offsets: Vec<usize>,
}

impl TransformStack {
    pub fn new(schemas: Vec<VariableSchema>) -> Result<Self> {
        Self::with_hidden(schemas, HIDDEN_UNITS)
    }

    pub fn with_hidden(schemas: Vec<VariableSchema>, hidden: usize) -> Result<Self> {
        if schemas.len() < 2 {
            return Err(Error::Config(format!(
                "need at least 2 variables to transform, got {}",
                schemas.len()
            )));
        }
        if hidden == 0 {
            return Err(Error::Config("hidden layer width must be positive".into()));
        }
        let mut nets = Vec::with_capacity(schemas.len());
        let mut offsets = vec![0];
        for s in &schemas {
            s.validate()?;
            if s.is_label {
                return Err(Error::Config(format!(
                    "label column {:?} cannot be transformed",
                    s.name
                )));
            }
            let net = TransformNet {
                input_width: s.input_width(),
                hidden,
            };
            offsets.push(offsets.last().unwrap() + net.param_count());
            nets.push(net);
        }
        Ok(Self {
            schemas,
            nets,
            offsets,
        })
    }

    pub fn schemas(&self) -> &[VariableSchema] {
        &self.schemas
    }

    pub fn nets(&self) -> &[TransformNet] {
        &self.nets
    }

    pub fn n_variables(&self) -> usize {
        self.nets.len()
    }

    pub fn n_params(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Range of variable `l`'s parameters in the flat vector.
    pub fn segment(&self, l: usize) -> Range<usize> {
        self.offsets[l]..self.offsets[l + 1]
    }

    /// Fan-in scaled normal initialization, `N(0, 1/fan_in)` for every weight
    /// and bias of a layer.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = rng_from_seed(seed);
        let mut theta = Vec::with_capacity(self.n_params());
        for net in &self.nets {
            let first = Normal::new(0.0, (1.0 / net.input_width as f64).sqrt()).unwrap();
            let second = Normal::new(0.0, (1.0 / net.hidden as f64).sqrt()).unwrap();
            let n_first = net.input_width * net.hidden + net.hidden;
            theta.extend((0..n_first).map(|_| first.sample(&mut rng)));
            theta.extend((0..net.hidden + 1).map(|_| second.sample(&mut rng)));
        }
        ParamVector(theta)
    }

    fn check_inputs(&self, params: &[f64], batch: &EncodedBatch) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "parameter vector has length {}, stack expects {}",
                params.len(),
                self.n_params()
            )));
        }
        if batch.columns.len() != self.n_variables() {
            return Err(Error::Shape(format!(
                "batch has {} variables, stack expects {}",
                batch.columns.len(),
                self.n_variables()
            )));
        }
        for (l, (col, net)) in batch.columns.iter().zip(&self.nets).enumerate() {
            if col.width != net.input_width {
                return Err(Error::Shape(format!(
                    "variable {l} encoded with width {}, network expects {}",
                    col.width, net.input_width
                )));
            }
        }
        Ok(())
    }

    /// Transforms variable `l` only.
    pub fn forward_variable(&self, l: usize, params: &[f64], batch: &EncodedBatch) -> Vec<f64> {
        let net = self.nets[l];
        let seg = &params[self.segment(l)];
        let col = &batch.columns[l];
        (0..batch.n_rows)
            .map(|i| net.forward_one(seg, col.row(i)))
            .collect()
    }

    /// Transformed `n x p` matrix.
    pub fn forward(&self, params: &[f64], batch: &EncodedBatch) -> Result<Matrix> {
        self.check_inputs(params, batch)?;
        let mut out = Matrix::zeros(batch.n_rows, self.n_variables());
        for l in 0..self.n_variables() {
            let values = self.forward_variable(l, params, batch);
            out.column_mut(l).copy_from_slice(&values);
        }
        Ok(out)
    }
}

pub fn build_stack(schemas: Vec<VariableSchema>, seed: u64) -> Result<(TransformStack, ParamVector)> {
    let stack = TransformStack::new(schemas)?;
    let theta = stack.init_params(seed);
    Ok((stack, theta))
}

/// Encoded network inputs of one variable, row-major `n_rows x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedColumn {
    pub width: usize,
    pub values: Vec<f64>,
}

impl EncodedColumn {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }
}

/// Network inputs for a set of rows, one [`EncodedColumn`] per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBatch {
    pub n_rows: usize,
    pub columns: Vec<EncodedColumn>,
}

impl EncodedBatch {
    pub fn select(&self, rows: &[usize]) -> EncodedBatch {
        let columns = self
            .columns
            .iter()
            .map(|c| {
                let mut values = Vec::with_capacity(rows.len() * c.width);
                for &r in rows {
                    values.extend_from_slice(c.row(r));
                }
                EncodedColumn {
                    width: c.width,
                    values,
                }
            })
            .collect();
        EncodedBatch {
            n_rows: rows.len(),
            columns,
        }
    }
}

/// A raw cell value prior to encoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RawValue<'a> {
    Number(f64),
    Label(&'a str),
}

/// Maps raw table rows to network inputs. Numerical and ordinal inputs are
/// standardized with statistics of the rows the encoder was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputEncoder {
    schemas: Vec<VariableSchema>,
    /// `(mean, std)` for scalar inputs, `None` for one-hot inputs.
    scalers: Vec<Option<(f64, f64)>>,
}

impl InputEncoder {
    pub fn fit(table: &DataTable, rows: &[usize]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InsufficientRows {
                needed: 2,
                got: rows.len(),
            });
        }
        let mut scalers = Vec::with_capacity(table.n_features());
        for (schema, column) in table.schemas().iter().zip(table.columns()) {
            let scaler = match (&schema.kind, column) {
                (VariableKind::Categorical { .. }, _) => None,
                (VariableKind::Numerical, Column::Numeric(v)) => {
                    Some(mean_std(rows.iter().map(|&r| v[r])))
                }
                (VariableKind::Ordinal { levels }, Column::Coded(v)) => Some(mean_std(
                    rows.iter().map(|&r| ordinal_position(v[r], levels.len())),
                )),
                _ => {
                    return Err(Error::InvalidData(format!(
                        "column {:?} storage does not match its schema",
                        schema.name
                    )))
                }
            };
            scalers.push(scaler);
        }
        Ok(Self {
            schemas: table.schemas().to_vec(),
            scalers,
        })
    }

    pub fn schemas(&self) -> &[VariableSchema] {
        &self.schemas
    }

    fn scale(&self, l: usize, v: f64) -> f64 {
        let (mean, std) = self.scalers[l].expect("scalar variable");
        if std <= STD_FLOOR {
            0.0
        } else {
            (v - mean) / std
        }
    }

    /// Encodes one raw row into one input vector per variable.
    pub fn encode_row(&self, raw: &[RawValue<'_>]) -> Result<Vec<Vec<f64>>> {
        if raw.len() != self.schemas.len() {
            return Err(Error::Shape(format!(
                "row has {} values, schema has {} variables",
                raw.len(),
                self.schemas.len()
            )));
        }
        let mut out = Vec::with_capacity(raw.len());
        for (l, (schema, value)) in self.schemas.iter().zip(raw).enumerate() {
            let encoded = match (&schema.kind, *value) {
                (VariableKind::Numerical, RawValue::Number(x)) => vec![self.scale(l, x)],
                (VariableKind::Numerical, RawValue::Label(s)) => {
                    let x: f64 = s.trim().parse().map_err(|_| {
                        Error::InvalidData(format!("column {:?}: {s:?} is not a number", schema.name))
                    })?;
                    vec![self.scale(l, x)]
                }
                (VariableKind::Categorical { levels }, RawValue::Label(s)) => {
                    let idx = schema.level_index(s)?;
                    let mut one_hot = vec![0.0; levels.len()];
                    one_hot[idx] = 1.0;
                    one_hot
                }
                (VariableKind::Ordinal { levels }, RawValue::Label(s)) => {
                    let idx = schema.level_index(s)?;
                    vec![self.scale(l, ordinal_position(idx, levels.len()))]
                }
                (_, RawValue::Number(x)) => {
                    return Err(Error::UnknownLevel {
                        column: schema.name.clone(),
                        value: x.to_string(),
                    })
                }
            };
            out.push(encoded);
        }
        Ok(out)
    }

    /// Encodes the given rows of a table.
    pub fn encode_rows(&self, table: &DataTable, rows: &[usize]) -> Result<EncodedBatch> {
        if table.schemas() != self.schemas.as_slice() {
            return Err(Error::Shape("table schema differs from the encoder's".into()));
        }
        let mut columns = Vec::with_capacity(self.schemas.len());
        for (l, (schema, column)) in self.schemas.iter().zip(table.columns()).enumerate() {
            let width = schema.input_width();
            let mut values = Vec::with_capacity(rows.len() * width);
            match (column, &schema.kind) {
                (Column::Numeric(v), _) => values.extend(rows.iter().map(|&r| self.scale(l, v[r]))),
                (Column::Coded(v), VariableKind::Categorical { .. }) => {
                    for &r in rows {
                        let start = values.len();
                        values.resize(start + width, 0.0);
                        values[start + v[r]] = 1.0;
                    }
                }
                (Column::Coded(v), VariableKind::Ordinal { levels }) => values.extend(
                    rows.iter()
                        .map(|&r| self.scale(l, ordinal_position(v[r], levels.len()))),
                ),
                (Column::Coded(_), VariableKind::Numerical) => {
                    return Err(Error::InvalidData(format!(
                        "column {:?} is coded but declared numerical",
                        schema.name
                    )))
                }
            }
            columns.push(EncodedColumn { width, values });
        }
        Ok(EncodedBatch {
            n_rows: rows.len(),
            columns,
        })
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    let std = (ss / (n - 1.0)).sqrt();
    if std <= STD_FLOOR * mean.abs().max(1.0) {
        (mean, STD_FLOOR)
    } else {
        (mean, std)
    }
}

/// Center of gravity of one categorical level in component space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCoordinate {
    pub level: String,
    pub count: usize,
    pub coordinates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCoordinates {
    pub levels: Vec<LevelCoordinate>,
    /// Levels that no row in the batch carries.
    pub empty_levels: Vec<String>,
}

/// Mean projected scores of the rows sharing each level of categorical
/// variable `variable`.
pub fn level_coordinates(
    stack: &TransformStack,
    params: &[f64],
    model: &PcaModel,
    batch: &EncodedBatch,
    variable: usize,
) -> Result<LevelCoordinates> {
    let schema = stack
        .schemas()
        .get(variable)
        .ok_or_else(|| Error::Config(format!("variable index {variable} out of range")))?;
    let levels = match &schema.kind {
        VariableKind::Categorical { levels } => levels,
        _ => {
            return Err(Error::UnsupportedSchema(format!(
                "column {:?} is not categorical",
                schema.name
            )))
        }
    };
    let transformed = stack.forward(params, batch)?;
    let scores = pca::project(model, &transformed)?;
    let p = scores.ncols();

    let mut sums = vec![vec![0.0; p]; levels.len()];
    let mut counts = vec![0usize; levels.len()];
    let col = &batch.columns[variable];
    for i in 0..batch.n_rows {
        let level = col
            .row(i)
            .iter()
            .position(|v| *v == 1.0)
            .ok_or_else(|| Error::InvalidData(format!("row {i} has no active level")))?;
        counts[level] += 1;
        for (s, z) in sums[level].iter_mut().zip(scores.row(i).iter()) {
            *s += z;
        }
    }

    let mut out = LevelCoordinates {
        levels: Vec::new(),
        empty_levels: Vec::new(),
    };
    for (idx, name) in levels.iter().enumerate() {
        if counts[idx] == 0 {
            out.empty_levels.push(name.clone());
        } else {
            out.levels.push(LevelCoordinate {
                level: name.clone(),
                count: counts[idx],
                coordinates: sums[idx].iter().map(|s| s / counts[idx] as f64).collect(),
            });
        }
    }
    Ok(out)
}

/// Adds `scale * noise` to `base` into `out`.
pub(crate) fn perturb_into(out: &mut Vec<f64>, base: &[f64], noise: &[f64], scale: f64) {
    out.clear();
    out.extend(base.iter().zip(noise).map(|(b, e)| b + scale * e));
}
