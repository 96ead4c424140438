use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use evopca::baselines::{self, KernelKind, KernelSpec};
use evopca::data;
use evopca::es::{self, EsConfig, ObjectiveMode, TrainingData};
use evopca::harness::{self, DatasetSource, ExperimentConfig};
use evopca::pca::{self, PcaModel};
use evopca::transforms::{EncodedBatch, EncodedColumn, ParamVector, TransformStack, VariableSchema};
use evopca::Matrix;

fn err(e: evopca::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: &[Vec<f64>]) -> PyResult<Matrix> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Ok(Matrix::from_fn(n, p, |i, j| rows[i][j]))
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn numeric_batch(m: &Matrix) -> EncodedBatch {
    EncodedBatch {
        n_rows: m.nrows(),
        columns: m
            .column_iter()
            .map(|c| EncodedColumn {
                width: 1,
                values: c.iter().copied().collect(),
            })
            .collect(),
    }
}

/// Linear PCA on standardized columns.
#[pyclass(name = "Pca", skip_from_py_object)]
struct PyPca {
    model: PcaModel,
}

#[pymethods]
impl PyPca {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let model = PcaModel::fit(&to_matrix(&rows)?).map_err(err)?;
        Ok(Self { model })
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.model.eigenvalues.clone()
    }

    /// Eigenvectors as rows.
    #[getter]
    fn loadings(&self) -> Vec<Vec<f64>> {
        to_rows(&self.model.loadings)
    }

    /// Contribution of variable `l` (column) to component `j` (row).
    fn contributions(&self) -> Vec<Vec<f64>> {
        to_rows(&self.model.contributions().entries)
    }

    fn partial_objectives(&self, k: usize) -> PyResult<Vec<f64>> {
        let p = self.model.n_components();
        if k == 0 || k >= p {
            return Err(PyValueError::new_err(format!("k={k} must satisfy 1 <= k < {p}")));
        }
        Ok(self.model.contributions().partial_objectives(k))
    }

    fn global_objective(&self, k: usize) -> PyResult<f64> {
        pca::global_objective(&self.model.eigenvalues, k).map_err(err)
    }

    fn explained_proportion(&self, k: usize) -> f64 {
        self.model.explained_proportion(k)
    }

    fn validation_proportion(&self, rows: Vec<Vec<f64>>, k: usize) -> PyResult<f64> {
        pca::explained_variance_validation(&self.model, &to_matrix(&rows)?, k).map_err(err)
    }

    fn project(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(&pca::project(&self.model, &to_matrix(&rows)?).map_err(err)?))
    }
}

/// Per-variable transformation networks over numerical columns.
#[pyclass(name = "TransformStack", skip_from_py_object)]
struct PyTransformStack {
    stack: TransformStack,
}

#[pymethods]
impl PyTransformStack {
    #[new]
    fn new(n_variables: usize) -> PyResult<Self> {
        let schemas = (0..n_variables)
            .map(|l| VariableSchema::numerical(format!("x{l}")))
            .collect();
        Ok(Self {
            stack: TransformStack::new(schemas).map_err(err)?,
        })
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.stack.n_params()
    }

    fn init_params(&self, seed: u64) -> Vec<f64> {
        self.stack.init_params(seed).0
    }

    fn forward(&self, params: Vec<f64>, rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let batch = numeric_batch(&to_matrix(&rows)?);
        Ok(to_rows(&self.stack.forward(&params, &batch).map_err(err)?))
    }

    /// Trains the networks with evolution strategies. Inputs should already
    /// be standardized. Returns `(params, validation proportion per
    /// generation)`.
    #[pyo3(signature = (params, train, validation, objective="partial", k=1, generations=100, population=200, sigma=0.01, alpha=0.01, batch_size=128, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &self,
        py: Python<'_>,
        params: Vec<f64>,
        train: Vec<Vec<f64>>,
        validation: Vec<Vec<f64>>,
        objective: &str,
        k: usize,
        generations: usize,
        population: usize,
        sigma: f64,
        alpha: f64,
        batch_size: usize,
        seed: u64,
    ) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let train = numeric_batch(&to_matrix(&train)?);
        let validation = numeric_batch(&to_matrix(&validation)?);
        let cfg = EsConfig {
            generations,
            learning_rate: alpha,
            noise_std: sigma,
            population,
            k,
            batch_size,
            objective: objective.parse::<ObjectiveMode>().map_err(err)?,
            seed,
            ..EsConfig::default()
        };
        let outcome = py
            .detach(|| {
                es::train(
                    &self.stack,
                    ParamVector(params),
                    TrainingData {
                        train: &train,
                        validation: &validation,
                    },
                    &cfg,
                )
            })
            .map_err(err)?;
        let curve = outcome.history.iter().map(|g| g.validation_proportion).collect();
        Ok((outcome.params.0, curve))
    }
}

/// Built-in synthetic dataset as a list of rows.
#[pyfunction]
#[pyo3(signature = (name, seed=0))]
fn synthetic(name: &str, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let table = data::builtin(name, seed).map_err(err)?;
    let rows: Vec<usize> = (0..table.n_rows()).collect();
    Ok(to_rows(&table.numeric_matrix(&rows).map_err(err)?))
}

/// Kernel PCA validation proportion with default kernel parameters.
#[pyfunction]
#[pyo3(signature = (train, validation, kernel="rbf", k=1))]
fn kpca_validation_proportion(
    train: Vec<Vec<f64>>,
    validation: Vec<Vec<f64>>,
    kernel: &str,
    k: usize,
) -> PyResult<f64> {
    let kind = match kernel {
        "rbf" => KernelKind::Rbf,
        "poly" => KernelKind::Polynomial,
        "cos" => KernelKind::Cosine,
        "sigmoid" => KernelKind::Sigmoid,
        "linear" => KernelKind::Linear,
        other => return Err(PyValueError::new_err(format!("unknown kernel {other:?}"))),
    };
    let train = to_matrix(&train)?;
    let spec = KernelSpec::with_defaults(kind, train.ncols());
    let fit = baselines::kpca_fit(&train, &spec).map_err(err)?;
    baselines::kpca_validation_proportion(&fit, &to_matrix(&validation)?, k)
        .map(|s| s.proportion)
        .map_err(err)
}

/// Runs the experiment harness on a built-in dataset and returns the
/// results as a JSON string.
#[pyfunction]
#[pyo3(signature = (dataset, methods="pca,kpca", k=1, repeats=1, seed=0, generations=None, population=None))]
#[allow(clippy::too_many_arguments)]
fn run_experiment(
    py: Python<'_>,
    dataset: &str,
    methods: &str,
    k: usize,
    repeats: usize,
    seed: u64,
    generations: Option<usize>,
    population: Option<usize>,
) -> PyResult<String> {
    let mut cfg = ExperimentConfig::new(DatasetSource::Builtin(dataset.to_string()), ".");
    cfg.methods = harness::parse_methods(methods, ObjectiveMode::Global).map_err(err)?;
    cfg.k = k;
    cfg.repeats = repeats;
    cfg.seed = seed;
    if let Some(g) = generations {
        cfg.es.generations = g;
        cfg.gp.generations = g;
    }
    if let Some(p) = population {
        cfg.es.population = p;
        cfg.gp.population = p;
    }
    let results = py.detach(|| harness::run_experiment(&cfg)).map_err(err)?;
    serde_json::to_string(&results).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn pyevopca(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPca>()?;
    m.add_class::<PyTransformStack>()?;
    m.add_function(wrap_pyfunction!(synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(kpca_validation_proportion, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
