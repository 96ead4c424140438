use std::fs::File;
use std::io::Read;
use std::path::Path;

use super::{Column, DataTable, Label};
use crate::transforms::{VariableKind, VariableSchema};
use crate::{Error, Result};

fn load_err(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Load {
        location: location.into(),
        message: message.into(),
    }
}

/// Reads the JSON schema sidecar.
pub fn load_schema(path: impl AsRef<Path>) -> Result<Vec<VariableSchema>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| load_err(path.display().to_string(), e.to_string()))?;
    let schemas: Vec<VariableSchema> = serde_json::from_reader(file)
        .map_err(|e| load_err(path.display().to_string(), format!("invalid schema: {e}")))?;
    for s in &schemas {
        s.validate()?;
    }
    if schemas.iter().filter(|s| s.is_label).count() > 1 {
        return Err(load_err(path.display().to_string(), "more than one label column"));
    }
    Ok(schemas)
}

/// Loads a delimited data file described by a schema sidecar.
pub fn load_table(data_path: impl AsRef<Path>, schema_path: impl AsRef<Path>) -> Result<DataTable> {
    let schemas = load_schema(schema_path)?;
    let data_path = data_path.as_ref();
    let file =
        File::open(data_path).map_err(|e| load_err(data_path.display().to_string(), e.to_string()))?;
    parse_table(file, schemas)
}

enum Builder {
    Numeric(Vec<f64>),
    Coded(Vec<usize>),
    Label(Vec<String>),
}

/// Parses comma-separated text with a header row. Rows are numbered from 1
/// (the first line after the header) in error messages.
pub fn parse_table<R: Read>(reader: R, schemas: Vec<VariableSchema>) -> Result<DataTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| load_err("header", e.to_string()))?
        .clone();

    for s in &schemas {
        if !headers.iter().any(|h| h == s.name) {
            return Err(load_err(
                format!("column {:?}", s.name),
                "missing from the data file header",
            ));
        }
    }
    if headers.len() != schemas.len() {
        let extra: Vec<&str> = headers
            .iter()
            .filter(|h| !schemas.iter().any(|s| s.name == *h))
            .collect();
        return Err(load_err(
            "header",
            format!("columns {extra:?} are not described by the schema"),
        ));
    }
    for (i, (h, s)) in headers.iter().zip(&schemas).enumerate() {
        if h != s.name {
            return Err(load_err(
                format!("header position {}", i + 1),
                format!("expected column {:?}, found {h:?}", s.name),
            ));
        }
    }

    let mut builders: Vec<Builder> = schemas
        .iter()
        .map(|s| match (&s.kind, s.is_label) {
            (_, true) => Builder::Label(Vec::new()),
            (VariableKind::Numerical, false) => Builder::Numeric(Vec::new()),
            (_, false) => Builder::Coded(Vec::new()),
        })
        .collect();

    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| load_err(format!("row {row}"), e.to_string()))?;
        if record.len() != schemas.len() {
            return Err(load_err(
                format!("row {row}"),
                format!("expected {} fields, found {}", schemas.len(), record.len()),
            ));
        }
        for ((cell, schema), builder) in record.iter().zip(&schemas).zip(&mut builders) {
            let at = || format!("row {row}, column {:?}", schema.name);
            match builder {
                Builder::Label(v) => v.push(cell.to_string()),
                Builder::Numeric(v) => {
                    let x: f64 = cell
                        .parse()
                        .map_err(|_| load_err(at(), format!("{cell:?} is not a number")))?;
                    if !x.is_finite() {
                        return Err(load_err(at(), format!("{cell:?} is not finite")));
                    }
                    v.push(x);
                }
                Builder::Coded(v) => {
                    let idx = schema.level_index(cell).map_err(|_| {
                        load_err(at(), format!("{cell:?} is not one of the schema levels"))
                    })?;
                    v.push(idx);
                }
            }
        }
    }

    let mut features = Vec::new();
    let mut columns = Vec::new();
    let mut label = None;
    for (schema, builder) in schemas.into_iter().zip(builders) {
        match builder {
            Builder::Label(values) => {
                label = Some(Label {
                    name: schema.name,
                    values,
                })
            }
            Builder::Numeric(v) => {
                features.push(schema);
                columns.push(Column::Numeric(v));
            }
            Builder::Coded(v) => {
                features.push(schema);
                columns.push(Column::Coded(v));
            }
        }
    }
    DataTable::new(features, columns, label)
}
