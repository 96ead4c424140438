//! Evolution-strategies training of the transformation networks.
//!
//! Every generation draws one minibatch of training rows and `P` Gaussian
//! perturbations of the flat parameter vector. Each perturbed candidate
//! transforms the minibatch, PCA is fitted on the result and the candidate is
//! scored either by the summed top-`k` eigenvalues (global mode) or by every
//! variable's own contribution to those eigenvalues (partial mode). The update
//! is the objective-weighted average of the noise:
//!
//! * global: `theta += alpha / (p * P * sigma) * sum_i F_i * eps_i`
//! * partial: `theta[l] += alpha / (P * sigma) * sum_i F_{l,i} * eps_i[l]`
//!   for each variable segment `l`, all variables sharing the same `eps_i`.
//!
//! The extra `1/p` in global mode keeps both step sizes on the same scale,
//! since the global objective is the sum of the `p` partial objectives.

use std::time::{Duration, Instant};

use log::{debug, warn};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pca::{self, contributions, ContributionMatrix, PcaModel, Standardizer};
use crate::transforms::{perturb_into, EncodedBatch, ParamVector, TransformStack};
use crate::{rng_from_seed, Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveMode {
    Global,
    Partial,
}

impl std::str::FromStr for ObjectiveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Self::Global),
            "partial" => Ok(Self::Partial),
            other => Err(Error::Config(format!(
                "unknown objective {other:?}; expected global or partial"
            ))),
        }
    }
}

impl std::fmt::Display for ObjectiveMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Global => "global",
            Self::Partial => "partial",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsConfig {
    pub generations: usize,
    pub learning_rate: f64,
    pub noise_std: f64,
    pub population: usize,
    /// Number of leading components the objective targets.
    pub k: usize,
    pub batch_size: usize,
    pub objective: ObjectiveMode,
    /// Generations between basis refreshes; 1 means a fresh
    /// eigendecomposition for every candidate.
    pub pca_refresh: usize,
    /// Subtract the population mean objective before weighting the noise.
    pub subtract_mean: bool,
    pub seed: u64,
}

impl Default for EsConfig {
    fn default() -> Self {
        Self {
            generations: 100,
            learning_rate: 1e-2,
            noise_std: 1e-2,
            population: 200,
            k: 1,
            batch_size: 128,
            objective: ObjectiveMode::Global,
            pca_refresh: 1,
            subtract_mean: false,
            seed: 0,
        }
    }
}

impl EsConfig {
    pub fn validate(&self, n_variables: usize, n_train: usize) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(self.noise_std > 0.0 && self.noise_std.is_finite()) {
            return fail(format!("noise std {} must be positive", self.noise_std));
        }
        if self.population < 2 {
            return fail(format!("population {} must be at least 2", self.population));
        }
        if self.k == 0 || self.k >= n_variables {
            return fail(format!(
                "k={} must satisfy 1 <= k < p={n_variables}",
                self.k
            ));
        }
        if self.batch_size < 2 || self.batch_size > n_train {
            return fail(format!(
                "batch size {} must lie in [2, {n_train}] (training rows)",
                self.batch_size
            ));
        }
        if self.pca_refresh == 0 {
            return fail("pca refresh interval must be at least 1".into());
        }
        Ok(())
    }
}

/// Per-generation training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generation: usize,
    /// Sum of the leading `k` eigenvalues on the full training set.
    pub train_objective: f64,
    pub train_proportion: f64,
    pub validation_proportion: f64,
    /// Candidates excluded from the update for non-finite objectives.
    pub dropped_candidates: usize,
    #[serde(skip)]
    pub duration: Duration,
}

/// `population` standard normal vectors of length `dim`.
pub fn sample_noise<R: Rng>(population: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..population)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

/// PCA quantities of one evaluated candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEvaluation {
    pub eigenvalues: Vec<f64>,
    pub contributions: ContributionMatrix,
}

impl CandidateEvaluation {
    pub fn global(&self, k: usize) -> f64 {
        self.eigenvalues.iter().take(k).sum()
    }

    pub fn partial(&self, k: usize) -> Vec<f64> {
        self.contributions.partial_objectives(k)
    }
}

/// Transforms `batch` with `params` and decomposes the covariance of the
/// standardized result. With a cached `basis` only the covariance is
/// recomputed and the eigenvalues become the Rayleigh quotients
/// `w_j S w_j^T` of the cached axes.
pub fn evaluate_candidate(
    stack: &TransformStack,
    params: &[f64],
    batch: &EncodedBatch,
    basis: Option<&Matrix>,
) -> Result<CandidateEvaluation> {
    let transformed = stack.forward(params, batch)?;
    let standardized = Standardizer::fit(&transformed)?.apply(&transformed)?;
    let s = pca::covariance(&standardized)?;
    match basis {
        None => {
            let eig = pca::eig_sym(&s)?;
            let c = contributions(&eig.vectors, &s)?;
            Ok(CandidateEvaluation {
                eigenvalues: eig.values,
                contributions: c,
            })
        }
        Some(w) => {
            let c = contributions(w, &s)?;
            let eigenvalues = c.entries.row_iter().map(|r| r.sum()).collect();
            Ok(CandidateEvaluation {
                eigenvalues,
                contributions: c,
            })
        }
    }
}

/// Outcome of one update.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub params: ParamVector,
    pub dropped: usize,
}

fn centered(values: &[f64], subtract_mean: bool) -> Vec<f64> {
    if !subtract_mean {
        return values.to_vec();
    }
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return values.to_vec();
    }
    let mean = finite.iter().sum::<f64>() / finite.len() as f64;
    values.iter().map(|v| v - mean).collect()
}

fn check_noise(theta: &[f64], objectives: usize, noise: &[Vec<f64>]) -> Result<()> {
    if objectives != noise.len() {
        return Err(Error::Shape(format!(
            "{objectives} objective values for {} noise vectors",
            noise.len()
        )));
    }
    if let Some(bad) = noise.iter().find(|e| e.len() != theta.len()) {
        return Err(Error::Shape(format!(
            "noise vector of length {} for {} parameters",
            bad.len(),
            theta.len()
        )));
    }
    Ok(())
}

/// Global-objective update over all parameters.
pub fn es_step_global(
    theta: &ParamVector,
    objectives: &[f64],
    noise: &[Vec<f64>],
    cfg: &EsConfig,
    n_variables: usize,
) -> Result<Step> {
    check_noise(theta.as_slice(), objectives.len(), noise)?;
    let weights = centered(objectives, cfg.subtract_mean);
    let mut grad = vec![0.0; theta.len()];
    let mut used = 0usize;
    for (f, eps) in weights.iter().zip(noise) {
        if !f.is_finite() {
            continue;
        }
        used += 1;
        for (g, e) in grad.iter_mut().zip(eps) {
            *g += f * e;
        }
    }
    let dropped = objectives.len() - used;
    let mut params = theta.clone();
    if used > 0 {
        let scale = cfg.learning_rate / (n_variables as f64 * used as f64 * cfg.noise_std);
        for (t, g) in params.as_mut_slice().iter_mut().zip(&grad) {
            *t += scale * g;
        }
    }
    Ok(Step { params, dropped })
}

/// Partial-objective update: segment `l` moves along its own slice of the
/// shared noise, weighted by `objectives[i][l]`.
pub fn es_step_partial(
    theta: &ParamVector,
    objectives: &[Vec<f64>],
    noise: &[Vec<f64>],
    cfg: &EsConfig,
    stack: &TransformStack,
) -> Result<Step> {
    check_noise(theta.as_slice(), objectives.len(), noise)?;
    let p = stack.n_variables();
    if let Some(bad) = objectives.iter().find(|f| f.len() != p) {
        return Err(Error::Shape(format!(
            "{} partial objectives for {p} variables",
            bad.len()
        )));
    }
    let mut params = theta.clone();
    let mut dropped = 0;
    for l in 0..p {
        let column: Vec<f64> = objectives.iter().map(|f| f[l]).collect();
        let weights = centered(&column, cfg.subtract_mean);
        let seg = stack.segment(l);
        let mut grad = vec![0.0; seg.len()];
        let mut used = 0usize;
        for (f, eps) in weights.iter().zip(noise) {
            if !f.is_finite() {
                continue;
            }
            used += 1;
            for (g, e) in grad.iter_mut().zip(&eps[seg.clone()]) {
                *g += f * e;
            }
        }
        dropped += column.len() - used;
        if used > 0 {
            let scale = cfg.learning_rate / (used as f64 * cfg.noise_std);
            for (t, g) in params.as_mut_slice()[seg].iter_mut().zip(&grad) {
                *t += scale * g;
            }
        }
    }
    Ok(Step { params, dropped })
}

/// Training and validation inputs for [`train`].
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub train: &'a EncodedBatch,
    pub validation: &'a EncodedBatch,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamVector,
    pub history: Vec<GenerationReport>,
}

/// Fits PCA on the transformed training rows and scores both splits.
#[derive(Debug, Clone)]
pub struct SplitEvaluation {
    pub model: PcaModel,
    pub train_objective: f64,
    pub train_proportion: f64,
    pub validation_proportion: f64,
}

pub fn evaluate_split(
    stack: &TransformStack,
    params: &[f64],
    data: TrainingData<'_>,
    k: usize,
) -> Result<SplitEvaluation> {
    let train = stack.forward(params, data.train)?;
    let model = PcaModel::fit(&train)?;
    let val = stack.forward(params, data.validation)?;
    let validation_proportion = pca::explained_variance_validation(&model, &val, k)?;
    Ok(SplitEvaluation {
        train_objective: model.eigenvalues.iter().take(k).sum(),
        train_proportion: model.explained_proportion(k),
        validation_proportion,
        model,
    })
}

enum Scores {
    Global(Vec<f64>),
    Partial(Vec<Vec<f64>>),
}

/// Runs `cfg.generations` ES generations from `theta`.
pub fn train(
    stack: &TransformStack,
    theta: ParamVector,
    data: TrainingData<'_>,
    cfg: &EsConfig,
) -> Result<TrainOutcome> {
    let p = stack.n_variables();
    cfg.validate(p, data.train.n_rows)?;
    if theta.len() != stack.n_params() {
        return Err(Error::Shape(format!(
            "parameter vector has length {}, stack expects {}",
            theta.len(),
            stack.n_params()
        )));
    }
    let mut rng = rng_from_seed(cfg.seed);
    rng.set_stream(1);

    let mut theta = theta;
    let mut history = Vec::with_capacity(cfg.generations);
    let mut cached_basis: Option<Matrix> = None;

    for generation in 0..cfg.generations {
        let started = Instant::now();
        let rows = index::sample(&mut rng, data.train.n_rows, cfg.batch_size).into_vec();
        let batch = data.train.select(&rows);
        let noise = sample_noise(cfg.population, theta.len(), &mut rng);

        let basis = if cfg.pca_refresh > 1 {
            if generation % cfg.pca_refresh == 0 || cached_basis.is_none() {
                cached_basis = match evaluate_candidate(stack, theta.as_slice(), &batch, None) {
                    Ok(_) => {
                        let transformed = stack.forward(theta.as_slice(), &batch)?;
                        Some(PcaModel::fit(&transformed)?.loadings)
                    }
                    Err(e) => {
                        warn!("generation {generation}: basis refresh failed: {e}");
                        None
                    }
                };
                None
            } else {
                cached_basis.as_ref()
            }
        } else {
            None
        };

        let evaluations: Vec<Option<CandidateEvaluation>> = noise
            .par_iter()
            .map_init(Vec::new, |buf, eps| {
                perturb_into(buf, theta.as_slice(), eps, cfg.noise_std);
                evaluate_candidate(stack, buf, &batch, basis).ok()
            })
            .collect();

        let scores = match cfg.objective {
            ObjectiveMode::Global => Scores::Global(
                evaluations
                    .iter()
                    .map(|e| e.as_ref().map_or(f64::NAN, |e| e.global(cfg.k)))
                    .collect(),
            ),
            ObjectiveMode::Partial => Scores::Partial(
                evaluations
                    .iter()
                    .map(|e| e.as_ref().map_or_else(|| vec![f64::NAN; p], |e| e.partial(cfg.k)))
                    .collect(),
            ),
        };
        let step = match &scores {
            Scores::Global(f) => es_step_global(&theta, f, &noise, cfg, p)?,
            Scores::Partial(f) => es_step_partial(&theta, f, &noise, cfg, stack)?,
        };
        if step.dropped > 0 {
            warn!("generation {generation}: dropped {} non-finite objective values", step.dropped);
        }
        theta = step.params;

        let eval = evaluate_split(stack, theta.as_slice(), data, cfg.k)?;
        debug!(
            "generation {generation}: train {:.4} validation {:.4}",
            eval.train_proportion, eval.validation_proportion
        );
        history.push(GenerationReport {
            generation,
            train_objective: eval.train_objective,
            train_proportion: eval.train_proportion,
            validation_proportion: eval.validation_proportion,
            dropped_candidates: step.dropped,
            duration: started.elapsed(),
        });
    }
    Ok(TrainOutcome {
        params: theta,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::{EncodedColumn, VariableSchema};
    use approx::assert_abs_diff_eq;

    fn numeric_batch(columns: &[Vec<f64>]) -> EncodedBatch {
        EncodedBatch {
            n_rows: columns[0].len(),
            columns: columns
                .iter()
                .map(|c| EncodedColumn {
                    width: 1,
                    values: c.clone(),
                })
                .collect(),
        }
    }

    fn gaussian_columns(n: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        (0..p)
            .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
            .collect()
    }

    // relu(x) - relu(-x) per variable, with 2 hidden units
    fn identity_stack(p: usize) -> (TransformStack, ParamVector) {
        let schemas = (0..p).map(|l| VariableSchema::numerical(format!("x{l}"))).collect();
        let stack = TransformStack::with_hidden(schemas, 2).unwrap();
        let seg = [1.0, -1.0, 0.0, 0.0, 1.0, -1.0, 0.0];
        let theta = (0..p).flat_map(|_| seg).collect();
        (stack, ParamVector(theta))
    }

    #[test]
    fn noise_is_seeded() {
        let a = sample_noise(3, 5, &mut rng_from_seed(1));
        let b = sample_noise(3, 5, &mut rng_from_seed(1));
        assert_eq!(a, b);
    }

    #[test]
    fn noise_moments() {
        let noise = sample_noise(10_000, 10, &mut rng_from_seed(2));
        for d in 0..10 {
            let col: Vec<f64> = noise.iter().map(|e| e[d]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 0.05, "{mean}");
            assert!((var - 1.0).abs() < 0.05, "{var}");
        }
    }

    #[test]
    fn identity_transform_on_uncorrelated_data() {
        let (stack, theta) = identity_stack(2);
        let batch = numeric_batch(&gaussian_columns(20_000, 2, 3));
        let eval = evaluate_candidate(&stack, theta.as_slice(), &batch, None).unwrap();
        assert!((eval.eigenvalues[0] - 1.0).abs() < 0.03);
        assert!((eval.eigenvalues[1] - 1.0).abs() < 0.03);
        let trace: f64 = eval.eigenvalues.iter().sum();
        assert!((eval.global(1) - 0.5 * trace).abs() < 0.03);
    }

    #[test]
    fn constant_transform_scores_zero() {
        let (stack, _) = identity_stack(3);
        let batch = numeric_batch(&gaussian_columns(50, 3, 4));
        let zeros = vec![0.0; stack.n_params()];
        let eval = evaluate_candidate(&stack, &zeros, &batch, None).unwrap();
        assert_eq!(eval.global(1), 0.0);
        assert!(eval.partial(1).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cached_basis_of_same_candidate_matches_fresh() {
        let (stack, _) = identity_stack(3);
        let theta = stack.init_params(5);
        let batch = numeric_batch(&gaussian_columns(128, 3, 5));
        let fresh = evaluate_candidate(&stack, theta.as_slice(), &batch, None).unwrap();
        let model = PcaModel::fit(&stack.forward(theta.as_slice(), &batch).unwrap()).unwrap();
        let cached = evaluate_candidate(&stack, theta.as_slice(), &batch, Some(&model.loadings)).unwrap();
        for (a, b) in fresh.eigenvalues.iter().zip(&cached.eigenvalues) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_objectives_leave_params() {
        let theta = ParamVector(vec![0.5, -1.0, 2.0]);
        let noise = sample_noise(4, 3, &mut rng_from_seed(6));
        let step = es_step_global(&theta, &[0.0; 4], &noise, &EsConfig::default(), 2).unwrap();
        assert_eq!(step.params, theta);
    }

    #[test]
    fn antithetic_pair() {
        let cfg = EsConfig::default();
        let theta = ParamVector(vec![0.0; 3]);
        let e1 = vec![0.3, -1.2, 0.7];
        let e2: Vec<f64> = e1.iter().map(|v| -v).collect();
        let p = 2;
        let step = es_step_global(&theta, &[1.0, -1.0], &[e1.clone(), e2], &cfg, p).unwrap();
        for (t, e) in step.params.as_slice().iter().zip(&e1) {
            let expected = cfg.learning_rate / (p as f64 * 2.0 * cfg.noise_std) * 2.0 * e;
            assert_abs_diff_eq!(*t, expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn non_finite_candidates_are_dropped() {
        let theta = ParamVector(vec![0.0; 2]);
        let noise = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let step =
            es_step_global(&theta, &[f64::NAN, 1.0], &noise, &EsConfig::default(), 2).unwrap();
        assert_eq!(step.dropped, 1);
        assert_eq!(step.params.as_slice()[0], 0.0);
        assert!(step.params.as_slice()[1] > 0.0);
    }

    #[test]
    fn partial_zero_objective_freezes_segment() {
        let (stack, theta) = identity_stack(2);
        let noise = sample_noise(5, stack.n_params(), &mut rng_from_seed(7));
        let objectives: Vec<Vec<f64>> = (0..5).map(|i| vec![0.0, i as f64]).collect();
        let step = es_step_partial(&theta, &objectives, &noise, &EsConfig::default(), &stack).unwrap();
        assert_eq!(&step.params.as_slice()[stack.segment(0)], &theta.as_slice()[stack.segment(0)]);
        assert_ne!(&step.params.as_slice()[stack.segment(1)], &theta.as_slice()[stack.segment(1)]);
    }

    #[test]
    fn global_and_partial_steps_agree_when_symmetric() {
        let (stack, theta) = identity_stack(3);
        let noise = sample_noise(6, stack.n_params(), &mut rng_from_seed(8));
        let per_var: Vec<Vec<f64>> = (0..6).map(|i| vec![0.1 * i as f64; 3]).collect();
        let global: Vec<f64> = per_var.iter().map(|f| f.iter().sum()).collect();
        let cfg = EsConfig::default();
        let a = es_step_global(&theta, &global, &noise, &cfg, 3).unwrap();
        let b = es_step_partial(&theta, &per_var, &noise, &cfg, &stack).unwrap();
        for (x, y) in a.params.as_slice().iter().zip(b.params.as_slice()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-14);
        }
    }

    #[test]
    fn config_validation() {
        let cfg = EsConfig::default();
        assert!(cfg.validate(2, 750).is_ok());
        assert!(cfg.validate(1, 750).is_err());
        assert!(cfg.validate(2, 100).is_err());
        assert!(EsConfig { population: 1, ..cfg.clone() }.validate(2, 750).is_err());
        assert!(EsConfig { pca_refresh: 0, ..cfg }.validate(2, 750).is_err());
        assert_eq!("partial".parse::<ObjectiveMode>().unwrap(), ObjectiveMode::Partial);
        assert!("both".parse::<ObjectiveMode>().is_err());
    }

    fn small_problem() -> (TransformStack, ParamVector, EncodedBatch, EncodedBatch) {
        let (stack, _) = identity_stack(2);
        let theta = stack.init_params(11);
        let cols = gaussian_columns(200, 2, 12);
        let mut x2 = cols[1].clone();
        for (a, b) in x2.iter_mut().zip(&cols[0]) {
            *a = 0.5 * *a + b * b;
        }
        let train = numeric_batch(&[cols[0][..150].to_vec(), x2[..150].to_vec()]);
        let val = numeric_batch(&[cols[0][150..].to_vec(), x2[150..].to_vec()]);
        (stack, theta, train, val)
    }

    #[test]
    fn zero_generations_return_initial_params() {
        let (stack, theta, train, val) = small_problem();
        let cfg = EsConfig {
            generations: 0,
            batch_size: 64,
            ..EsConfig::default()
        };
        let out = train_fn(&stack, theta.clone(), &train, &val, &cfg);
        assert_eq!(out.params, theta);
        assert!(out.history.is_empty());
    }

    fn train_fn(
        stack: &TransformStack,
        theta: ParamVector,
        train_b: &EncodedBatch,
        val: &EncodedBatch,
        cfg: &EsConfig,
    ) -> TrainOutcome {
        train(
            stack,
            theta,
            TrainingData {
                train: train_b,
                validation: val,
            },
            cfg,
        )
        .unwrap()
    }

    #[test]
    fn training_is_deterministic() {
        let (stack, theta, train_b, val) = small_problem();
        for objective in [ObjectiveMode::Global, ObjectiveMode::Partial] {
            for pca_refresh in [1, 3] {
                let cfg = EsConfig {
                    generations: 5,
                    population: 20,
                    batch_size: 64,
                    objective,
                    pca_refresh,
                    seed: 3,
                    ..EsConfig::default()
                };
                let a = train_fn(&stack, theta.clone(), &train_b, &val, &cfg);
                let b = train_fn(&stack, theta.clone(), &train_b, &val, &cfg);
                assert_eq!(a.params, b.params);
                assert_eq!(a.history.len(), 5);
                for (x, y) in a.history.iter().zip(&b.history) {
                    assert_eq!(x.generation, y.generation);
                    assert_eq!(x.validation_proportion.to_bits(), y.validation_proportion.to_bits());
                    assert!(x.train_objective.is_finite());
                }
            }
        }
    }
}
