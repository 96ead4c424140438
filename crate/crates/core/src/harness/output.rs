use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::summary::{aggregate, relative_difference};
use super::{ExperimentResults, Method};
use crate::{Error, Result};

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::InvalidData(format!("csv: {e}"));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidData(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidData(e.to_string()))
}

/// One row per method: final validation proportion statistics, the modal
/// kernel for kernel PCA and, on the partial-objective row, the relative
/// difference of its mean against the global-objective mean.
pub fn table_csv(results: &ExperimentResults) -> Result<String> {
    let summary = aggregate(&results.records);
    let d = match (summary.get(Method::EsPartial), summary.get(Method::EsGlobal)) {
        (Some(p), Some(g)) => relative_difference(p.mean, g.mean),
        _ => None,
    };
    let rows = summary
        .methods
        .iter()
        .map(|m| {
            vec![
                results.dataset.clone(),
                results.k.to_string(),
                m.method.to_string(),
                m.runs.to_string(),
                fmt(m.mean),
                fmt(m.median),
                fmt(m.p20),
                fmt(m.p80),
                m.kernel.clone().unwrap_or_default(),
                if m.method == Method::EsPartial {
                    d.map(fmt).unwrap_or_default()
                } else {
                    String::new()
                },
            ]
        })
        .collect();
    csv_string(
        &[
            "dataset",
            "k",
            "method",
            "runs",
            "mean",
            "median",
            "p20",
            "p80",
            "kpca_kernel",
            "relative_difference",
        ],
        rows,
    )
}

/// Per-generation validation median and 20th/80th percentiles of every
/// method that has a history.
pub fn curves_csv(results: &ExperimentResults) -> Result<String> {
    let summary = aggregate(&results.records);
    let rows = summary
        .methods
        .iter()
        .flat_map(|m| {
            m.curve.iter().map(move |c| {
                vec![
                    c.generation.to_string(),
                    m.method.to_string(),
                    fmt(c.median),
                    fmt(c.p20),
                    fmt(c.p80),
                ]
            })
        })
        .collect();
    csv_string(&["generation", "method", "median", "p20", "p80"], rows)
}

/// GP expressions by repeat, or `None` when no GP run is present.
pub fn expressions_txt(results: &ExperimentResults) -> Option<String> {
    let mut out = String::new();
    for r in results.records.iter().filter(|r| r.method == Method::Gp) {
        out.push_str(&format!(
            "repeat {} (seed {}), validation {:.4}\n",
            r.repeat, r.seed, r.validation_proportion
        ));
        for e in r.expressions.iter().flatten() {
            out.push_str("  ");
            out.push_str(e);
            out.push('\n');
        }
    }
    (!out.is_empty()).then_some(out)
}

/// Creates `dir` if needed and checks that files can be created in it.
pub fn ensure_writable(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let probe = dir.join(".write-probe");
    fs::File::create(&probe)?;
    fs::remove_file(&probe)?;
    Ok(())
}

fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(contents.as_bytes())?;
    f.sync_all()?;
    fs::rename(&tmp, &target)?;
    Ok(target)
}

/// Writes `results.json`, `table.csv`, `curves.csv` and, for GP runs,
/// `expressions.txt`. Returns the written paths.
pub fn emit_outputs(results: &ExperimentResults, dir: &Path) -> Result<Vec<PathBuf>> {
    if results.methods.is_empty() {
        return Err(Error::Config("no methods selected".into()));
    }
    ensure_writable(dir)?;
    let mut json = serde_json::to_string_pretty(results)?;
    json.push('\n');
    let mut written = vec![
        write_atomic(dir, "results.json", &json)?,
        write_atomic(dir, "table.csv", &table_csv(results)?)?,
        write_atomic(dir, "curves.csv", &curves_csv(results)?)?,
    ];
    if let Some(text) = expressions_txt(results) {
        written.push(write_atomic(dir, "expressions.txt", &text)?);
    }
    Ok(written)
}
