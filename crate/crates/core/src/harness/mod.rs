//! Repeated, seeded experiments over every method and their aggregation.

mod output;
mod summary;

pub use output::{curves_csv, emit_outputs, ensure_writable, expressions_txt, table_csv};
pub use summary::{aggregate, percentile, relative_difference, CurvePoint, MethodSummary, Summary};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{best_kernel, kpca_validation_proportion, linear_pca_baseline};
use crate::data::{self, DataTable, SplitPair, TRAIN_RATIO};
use crate::es::{self, EsConfig, GenerationReport, ObjectiveMode, TrainingData};
use crate::gp::{self, GpConfig, GpData};
use crate::pca::{self, PcaModel};
use crate::transforms::{build_stack, InputEncoder};
use crate::{Error, Result};

/// Default number of repeats per experiment.
pub const DEFAULT_REPEATS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Pca,
    Kpca,
    EsGlobal,
    EsPartial,
    Gp,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Pca,
        Method::Kpca,
        Method::EsGlobal,
        Method::EsPartial,
        Method::Gp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pca => "pca",
            Method::Kpca => "kpca",
            Method::EsGlobal => "es-global",
            Method::EsPartial => "es-partial",
            Method::Gp => "gp",
        }
    }

    pub fn is_iterative(self) -> bool {
        matches!(self, Method::EsGlobal | Method::EsPartial | Method::Gp)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| unknown_method(s))
    }
}

fn unknown_method(s: &str) -> Error {
    Error::Config(format!(
        "unknown method {s:?}; valid methods: pca, kpca, es, es-global, es-partial, gp"
    ))
}

/// Parses a comma-separated method list. The bare name `es` resolves to the
/// ES variant selected by `objective`. Duplicates are dropped.
pub fn parse_methods(list: &str, objective: ObjectiveMode) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m = match name {
            "es" => match objective {
                ObjectiveMode::Global => Method::EsGlobal,
                ObjectiveMode::Partial => Method::EsPartial,
            },
            other => other.parse()?,
        };
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSource {
    Builtin(String),
    Files { data: PathBuf, schema: PathBuf },
}

impl DatasetSource {
    pub fn name(&self) -> String {
        match self {
            DatasetSource::Builtin(n) => n.clone(),
            DatasetSource::Files { data, .. } => data
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| data.display().to_string()),
        }
    }

    pub fn load(&self, seed: u64) -> Result<DataTable> {
        match self {
            DatasetSource::Builtin(n) => data::builtin(n, seed),
            DatasetSource::Files { data, schema } => data::load_table(data, schema),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub methods: Vec<Method>,
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub es: EsConfig,
    pub gp: GpConfig,
    /// Worker threads for repeats; `None` uses every core.
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSource, out: impl Into<PathBuf>) -> Self {
        Self {
            dataset,
            methods: Method::ALL.to_vec(),
            k: 1,
            repeats: DEFAULT_REPEATS,
            seed: 0,
            out: out.into(),
            es: EsConfig::default(),
            gp: GpConfig::default(),
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.methods.iter().any(|m| matches!(m, Method::EsGlobal | Method::EsPartial)) {
            let probe = EsConfig {
                k: 1,
                batch_size: 2,
                ..self.es.clone()
            };
            probe.validate(2, 2)?;
        }
        if self.methods.contains(&Method::Gp) {
            self.gp.validate()?;
        }
        Ok(())
    }
}

/// Outcome of one method on one repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub repeat: usize,
    pub seed: u64,
    /// Validation proportion for the experiment's `k`.
    pub validation_proportion: f64,
    /// Validation proportions of the final model, keyed by `k` (1 and 2 when
    /// the data has enough columns).
    pub validation_by_k: BTreeMap<usize, f64>,
    pub train_proportion: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<GenerationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expressions: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl RunRecord {
    fn new(method: Method, repeat: usize, seed: u64, validation_proportion: f64) -> Self {
        Self {
            method,
            repeat,
            seed,
            validation_proportion,
            validation_by_k: BTreeMap::new(),
            train_proportion: None,
            history: Vec::new(),
            kernel: None,
            expressions: None,
            flags: Vec::new(),
        }
    }
}

/// Everything written to `results.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub dataset: String,
    pub k: usize,
    pub methods: Vec<Method>,
    pub records: Vec<RunRecord>,
}

fn reported_ks(p: usize) -> Vec<usize> {
    [1, 2].into_iter().filter(|&k| k <= p).collect()
}

struct Repeat<'a> {
    table: &'a DataTable,
    split: SplitPair,
    index: usize,
    seed: u64,
    cfg: &'a ExperimentConfig,
}

impl Repeat<'_> {
    fn run(&self, method: Method) -> Result<RunRecord> {
        match method {
            Method::Pca => self.pca(),
            Method::Kpca => self.kpca(),
            Method::EsGlobal => self.es(ObjectiveMode::Global),
            Method::EsPartial => self.es(ObjectiveMode::Partial),
            Method::Gp => self.gp(),
        }
    }

    fn record(&self, method: Method, proportion: f64) -> RunRecord {
        RunRecord::new(method, self.index, self.seed, proportion)
    }

    fn pca(&self) -> Result<RunRecord> {
        let k = self.cfg.k;
        let mut rec = self.record(Method::Pca, linear_pca_baseline(self.table, &self.split, k)?);
        let train = self.table.expanded_matrix(&self.split.train);
        let model = PcaModel::fit(&train)?;
        let val = self.table.expanded_matrix(&self.split.validation);
        for kk in reported_ks(train.ncols()) {
            rec.validation_by_k
                .insert(kk, pca::explained_variance_validation(&model, &val, kk)?);
        }
        rec.train_proportion = Some(model.explained_proportion(k.min(model.n_components())));
        Ok(rec)
    }

    fn kpca(&self) -> Result<RunRecord> {
        let train = self.table.expanded_matrix(&self.split.train);
        let val = self.table.expanded_matrix(&self.split.validation);
        let (choice, fit) = best_kernel(&train, &val, self.cfg.k)?;
        let mut rec = self.record(Method::Kpca, choice.proportion);
        rec.kernel = Some(choice.kernel.name().to_string());
        for (kind, reason) in &choice.skipped {
            rec.flags.push(format!("kernel {} skipped: {reason}", kind.name()));
        }
        for kk in reported_ks(train.ncols()) {
            let score = kpca_validation_proportion(&fit, &val, kk)?;
            if score.truncated {
                rec.flags.push(format!("k={kk} truncated to {} components", score.components));
            }
            rec.validation_by_k.insert(kk, score.proportion);
        }
        Ok(rec)
    }

    fn es(&self, objective: ObjectiveMode) -> Result<RunRecord> {
        let method = match objective {
            ObjectiveMode::Global => Method::EsGlobal,
            ObjectiveMode::Partial => Method::EsPartial,
        };
        let encoder = InputEncoder::fit(self.table, &self.split.train)?;
        let train = encoder.encode_rows(self.table, &self.split.train)?;
        let validation = encoder.encode_rows(self.table, &self.split.validation)?;
        let (stack, theta) = build_stack(self.table.schemas().to_vec(), self.seed)?;
        let cfg = EsConfig {
            objective,
            k: self.cfg.k,
            seed: self.seed,
            ..self.cfg.es.clone()
        };
        let data = TrainingData {
            train: &train,
            validation: &validation,
        };
        let outcome = es::train(&stack, theta, data, &cfg)?;
        let fin = es::evaluate_split(&stack, outcome.params.as_slice(), data, cfg.k)?;
        let mut rec = self.record(method, fin.validation_proportion);
        rec.train_proportion = Some(fin.train_proportion);
        let val_t = stack.forward(outcome.params.as_slice(), &validation)?;
        for kk in reported_ks(stack.n_variables()) {
            rec.validation_by_k
                .insert(kk, pca::explained_variance_validation(&fin.model, &val_t, kk)?);
        }
        let dropped: usize = outcome.history.iter().map(|g| g.dropped_candidates).sum();
        if dropped > 0 {
            rec.flags.push(format!("{dropped} non-finite candidate evaluations dropped"));
        }
        rec.history = outcome.history;
        Ok(rec)
    }

    fn gp(&self) -> Result<RunRecord> {
        let train = self.table.numeric_matrix(&self.split.train)?;
        let validation = self.table.numeric_matrix(&self.split.validation)?;
        let cfg = GpConfig {
            seed: self.seed,
            ..self.cfg.gp.clone()
        };
        let data = GpData {
            schemas: self.table.schemas(),
            train: &train,
            validation: &validation,
        };
        let outcome = gp::evolve(data, &cfg, self.cfg.k)?;
        let (t, _) = outcome.best.transform(&train)?;
        let model = PcaModel::fit(&t)?;
        let (v, _) = outcome.best.transform(&validation)?;
        let mut rec = self.record(
            Method::Gp,
            pca::explained_variance_validation(&model, &v, self.cfg.k)?,
        );
        rec.train_proportion = Some(model.explained_proportion(self.cfg.k));
        for kk in reported_ks(model.n_components()) {
            rec.validation_by_k
                .insert(kk, pca::explained_variance_validation(&model, &v, kk)?);
        }
        let names: Vec<String> = self.table.schemas().iter().map(|s| s.name.clone()).collect();
        rec.expressions = Some(outcome.best.expressions(&names));
        if outcome.best.non_finite {
            rec.flags.push("non-finite tree outputs replaced by 0".into());
        }
        rec.history = outcome.history;
        Ok(rec)
    }
}

fn check_dataset(table: &DataTable, cfg: &ExperimentConfig) -> Result<()> {
    let p = table.n_features();
    let iterative = cfg.methods.iter().any(|m| m.is_iterative());
    if iterative && cfg.k >= p {
        return Err(Error::Config(format!(
            "k={} must be smaller than the number of variables ({p})",
            cfg.k
        )));
    }
    if !iterative && cfg.k > table.schemas().iter().map(|s| s.input_width()).sum() {
        return Err(Error::Config(format!("k={} exceeds the number of encoded columns", cfg.k)));
    }
    if cfg.methods.contains(&Method::Gp) && !table.is_all_numeric() {
        return Err(Error::UnsupportedSchema(
            "gp requires every feature column to be numerical".into(),
        ));
    }
    if let Some(&m) = cfg
        .methods
        .iter()
        .find(|m| matches!(m, Method::EsGlobal | Method::EsPartial))
    {
        let n_train = (TRAIN_RATIO * table.n_rows() as f64).floor() as usize;
        if cfg.es.batch_size > n_train {
            return Err(Error::Config(format!(
                "{m}: batch size {} exceeds the {n_train} training rows",
                cfg.es.batch_size
            )));
        }
    }
    Ok(())
}

/// Runs every selected method on every repeat. Repeat `r` uses seed
/// `cfg.seed + r` for its split, initialization and search; built-in data is
/// generated once from `cfg.seed`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.validate()?;
    let table = cfg.dataset.load(cfg.seed)?;
    check_dataset(&table, cfg)?;

    let run_all = || -> Result<Vec<Vec<RunRecord>>> {
        (0..cfg.repeats)
            .into_par_iter()
            .map(|r| {
                let seed = cfg.seed.wrapping_add(r as u64);
                let repeat = Repeat {
                    table: &table,
                    split: data::split(&table, TRAIN_RATIO, seed)?,
                    index: r,
                    seed,
                    cfg,
                };
                cfg.methods
                    .iter()
                    .map(|&m| {
                        log::info!("repeat {r}: running {m}");
                        repeat
                            .run(m)
                            .map_err(|e| Error::InvalidInput(format!("{m} (repeat {r}): {e}")))
                    })
                    .collect()
            })
            .collect()
    };
    let per_repeat = match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run_all)?,
        None => run_all()?,
    };
    Ok(ExperimentResults {
        dataset: cfg.dataset.name(),
        k: cfg.k,
        methods: cfg.methods.clone(),
        records: per_repeat.into_iter().flatten().collect(),
    })
}

/// Optional TOML experiment file. Every key may be overridden on the
/// command line.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub dataset: Option<String>,
    pub schema: Option<PathBuf>,
    pub methods: Option<Vec<String>>,
    pub objective: Option<ObjectiveMode>,
    pub k: Option<usize>,
    pub repeats: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub es: Option<EsConfig>,
    pub gp: Option<GpConfig>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Resolves a dataset argument: a built-in name, or a data file that needs
/// a schema.
pub fn dataset_source(dataset: &str, schema: Option<&Path>) -> Result<DatasetSource> {
    if data::BUILTIN_DATASETS.contains(&dataset) {
        return Ok(DatasetSource::Builtin(dataset.to_string()));
    }
    match schema {
        Some(s) => Ok(DatasetSource::Files {
            data: PathBuf::from(dataset),
            schema: s.to_path_buf(),
        }),
        None => Err(Error::Config(format!(
            "dataset {dataset:?} is not built in ({}); pass --schema for a data file",
            data::BUILTIN_DATASETS.join(", ")
        ))),
    }
}
