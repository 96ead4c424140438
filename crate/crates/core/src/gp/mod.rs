//! Genetic programming over per-variable expression trees.
//!
//! An individual holds one tree per variable. Each tree is scored by its
//! variable's partial objective on the full training set, and parents for
//! tree `l` are chosen by tournament on that score alone, so the trees of one
//! variable form their own breeding pool while still being evaluated
//! jointly.

mod ops;
mod tree;

pub use ops::{crossover, mutate, tournament_select};
pub use tree::{eval_tree, generate, BinaryOp, GpNode, UnaryOp};

use std::time::Instant;

use log::debug;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::es::GenerationReport;
use crate::pca::{self, PcaModel};
use crate::transforms::VariableSchema;
use crate::{rng_from_seed, Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub crossover_prob: f64,
    pub subtree_mutation_prob: f64,
    pub point_mutation_prob: f64,
    pub population: usize,
    pub generations: usize,
    pub min_depth: usize,
    pub max_depth: usize,
    pub tournament_size: usize,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            crossover_prob: 0.8,
            subtree_mutation_prob: 0.2,
            point_mutation_prob: 0.2,
            population: 1000,
            generations: 100,
            min_depth: 2,
            max_depth: 7,
            tournament_size: 7,
            seed: 0,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("crossover", self.crossover_prob),
            ("subtree mutation", self.subtree_mutation_prob),
            ("point mutation", self.point_mutation_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} probability {p} outside [0, 1]")));
            }
        }
        if self.population < 2 {
            return Err(Error::Config(format!("population {} must be at least 2", self.population)));
        }
        if self.min_depth < 2 || self.min_depth > self.max_depth {
            return Err(Error::Config(format!(
                "depth range [{}, {}] must satisfy 2 <= min <= max",
                self.min_depth, self.max_depth
            )));
        }
        if self.tournament_size == 0 {
            return Err(Error::Config("tournament size must be at least 1".into()));
        }
        Ok(())
    }
}

/// One tree per variable plus cached scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpIndividual {
    pub trees: Vec<GpNode>,
    /// Partial objective of each variable.
    pub fitness: Vec<f64>,
    /// Sum of the leading `k` eigenvalues.
    pub global: f64,
    /// Whether any evaluation produced non-finite values.
    pub non_finite: bool,
}

impl GpIndividual {
    fn unscored(trees: Vec<GpNode>) -> Self {
        let p = trees.len();
        Self {
            trees,
            fitness: vec![0.0; p],
            global: 0.0,
            non_finite: false,
        }
    }

    /// Applies tree `l` to column `l` of `x`.
    pub fn transform(&self, x: &Matrix) -> Result<(Matrix, usize)> {
        if x.ncols() != self.trees.len() {
            return Err(Error::Shape(format!(
                "{} columns for {} trees",
                x.ncols(),
                self.trees.len()
            )));
        }
        let mut out = Matrix::zeros(x.nrows(), x.ncols());
        let mut replaced = 0;
        for (l, tree) in self.trees.iter().enumerate() {
            let column: Vec<f64> = x.column(l).iter().copied().collect();
            let (values, r) = eval_tree(tree, &column);
            replaced += r;
            out.set_column(l, &nalgebra::DVector::from_vec(values));
        }
        Ok((out, replaced))
    }

    /// Infix expression per variable, named after the schema columns.
    pub fn expressions(&self, names: &[String]) -> Vec<String> {
        self.trees
            .iter()
            .zip(names)
            .map(|(t, n)| format!("{n} -> {}", t.to_infix(n)))
            .collect()
    }
}

/// Ramped half-and-half: individual `i` uses depth `min + i % span` and
/// alternates full and grow construction between consecutive ramps.
pub fn init_population(cfg: &GpConfig, schemas: &[VariableSchema]) -> Result<Vec<GpIndividual>> {
    cfg.validate()?;
    check_schemas(schemas)?;
    let mut rng = rng_from_seed(cfg.seed);
    let span = cfg.max_depth - cfg.min_depth + 1;
    Ok((0..cfg.population)
        .map(|i| {
            let depth = cfg.min_depth + i % span;
            let full = (i / span).is_multiple_of(2);
            let trees = schemas
                .iter()
                .map(|_| generate(&mut rng, cfg.min_depth, depth, full))
                .collect();
            GpIndividual::unscored(trees)
        })
        .collect())
}

fn check_schemas(schemas: &[VariableSchema]) -> Result<()> {
    if let Some(s) = schemas.iter().find(|s| !s.is_numerical()) {
        return Err(Error::UnsupportedSchema(format!(
            "genetic programming needs numerical inputs; column {:?} is not",
            s.name
        )));
    }
    if schemas.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 variables, got {}",
            schemas.len()
        )));
    }
    Ok(())
}

fn score(ind: &mut GpIndividual, x: &Matrix, k: usize) {
    let scored = ind
        .transform(x)
        .and_then(|(t, replaced)| PcaModel::fit(&t).map(|m| (m, replaced)));
    match scored {
        Ok((model, replaced)) => {
            ind.fitness = model.contributions().partial_objectives(k);
            ind.global = model.eigenvalues.iter().take(k).sum();
            ind.non_finite = replaced > 0;
        }
        Err(_) => {
            ind.fitness.iter_mut().for_each(|f| *f = 0.0);
            ind.global = 0.0;
            ind.non_finite = true;
        }
    }
    if !ind.global.is_finite() || ind.fitness.iter().any(|f| !f.is_finite()) {
        ind.fitness.iter_mut().for_each(|f| *f = 0.0);
        ind.global = 0.0;
        ind.non_finite = true;
    }
}

fn best_global(population: &[GpIndividual]) -> usize {
    let mut best = 0;
    for (i, ind) in population.iter().enumerate() {
        if ind.global > population[best].global {
            best = i;
        }
    }
    best
}

fn best_on(population: &[GpIndividual], l: usize) -> usize {
    let mut best = 0;
    for (i, ind) in population.iter().enumerate() {
        if ind.fitness[l] > population[best].fitness[l] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct GpOutcome {
    pub best: GpIndividual,
    pub history: Vec<GenerationReport>,
    /// Best partial objective of each variable per generation, initial
    /// population first.
    pub best_fitness: Vec<Vec<f64>>,
}

/// Raw numerical training and validation rows.
#[derive(Debug, Clone, Copy)]
pub struct GpData<'a> {
    pub schemas: &'a [VariableSchema],
    pub train: &'a Matrix,
    pub validation: &'a Matrix,
}

fn report(
    generation: usize,
    best: &GpIndividual,
    data: GpData<'_>,
    k: usize,
    started: Instant,
) -> Result<GenerationReport> {
    let (t, _) = best.transform(data.train)?;
    let model = PcaModel::fit(&t)?;
    let (v, _) = best.transform(data.validation)?;
    Ok(GenerationReport {
        generation,
        train_objective: model.eigenvalues.iter().take(k).sum(),
        train_proportion: model.explained_proportion(k),
        validation_proportion: pca::explained_variance_validation(&model, &v, k)?,
        dropped_candidates: 0,
        duration: started.elapsed(),
    })
}

/// Generational GP with per-variable elitism. Returns the individual with
/// the largest global objective in the final population.
pub fn evolve(data: GpData<'_>, cfg: &GpConfig, k: usize) -> Result<GpOutcome> {
    let p = data.schemas.len();
    check_schemas(data.schemas)?;
    if k == 0 || k >= p {
        return Err(Error::InvalidInput(format!("k={k} must satisfy 1 <= k < p={p}")));
    }
    for (name, m) in [("training", data.train), ("validation", data.validation)] {
        if m.ncols() != p {
            return Err(Error::Shape(format!("{name} matrix has {} columns, expected {p}", m.ncols())));
        }
    }
    let mut population = init_population(cfg, data.schemas)?;
    population.par_iter_mut().for_each(|ind| score(ind, data.train, k));

    let mut rng = rng_from_seed(cfg.seed);
    rng.set_stream(1);
    let mut history = Vec::with_capacity(cfg.generations);
    let mut best_fitness = vec![(0..p).map(|l| population[best_on(&population, l)].fitness[l]).collect()];

    for generation in 0..cfg.generations {
        let started = Instant::now();
        let mut next: Vec<GpIndividual> = Vec::with_capacity(cfg.population);
        let mut elites: Vec<usize> = (0..p).map(|l| best_on(&population, l)).collect();
        elites.push(best_global(&population));
        elites.sort_unstable();
        elites.dedup();
        next.extend(elites.iter().map(|&i| population[i].clone()));

        let fitness_by_var: Vec<Vec<f64>> = (0..p)
            .map(|l| population.iter().map(|ind| ind.fitness[l]).collect())
            .collect();
        while next.len() < cfg.population {
            let mut first = Vec::with_capacity(p);
            let mut second = Vec::with_capacity(p);
            for (l, fitness) in fitness_by_var.iter().enumerate() {
                let a = &population[tournament_select(fitness, cfg.tournament_size, &mut rng)].trees[l];
                let b = &population[tournament_select(fitness, cfg.tournament_size, &mut rng)].trees[l];
                let (x, y) = if rng.random_bool(cfg.crossover_prob) {
                    crossover(a, b, cfg, &mut rng)
                } else {
                    (a.clone(), b.clone())
                };
                first.push(mutate(&x, cfg, &mut rng));
                second.push(mutate(&y, cfg, &mut rng));
            }
            next.push(GpIndividual::unscored(first));
            if next.len() < cfg.population {
                next.push(GpIndividual::unscored(second));
            }
        }
        let n_elites = elites.len();
        next[n_elites..]
            .par_iter_mut()
            .for_each(|ind| score(ind, data.train, k));
        population = next;

        best_fitness.push((0..p).map(|l| population[best_on(&population, l)].fitness[l]).collect());
        let best = &population[best_global(&population)];
        let r = report(generation, best, data, k, started)?;
        debug!(
            "gp generation {generation}: train {:.4} validation {:.4}",
            r.train_proportion, r.validation_proportion
        );
        history.push(r);
    }

    let best = population[best_global(&population)].clone();
    Ok(GpOutcome {
        best,
        history,
        best_fitness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn schemas(p: usize) -> Vec<VariableSchema> {
        (0..p).map(|l| VariableSchema::numerical(format!("x{l}"))).collect()
    }

    fn small_cfg() -> GpConfig {
        GpConfig {
            population: 60,
            generations: 5,
            seed: 3,
            ..GpConfig::default()
        }
    }

    fn correlated(n: usize, seed: u64) -> Matrix {
        let mut rng = rng_from_seed(seed);
        Matrix::from_fn(n, 2, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn ramp_covers_all_depths() {
        let pop = init_population(&GpConfig::default(), &schemas(2)).unwrap();
        let mut hist = [0usize; 8];
        for ind in &pop {
            for t in &ind.trees {
                hist[t.depth()] += 1;
            }
        }
        assert_eq!(hist[0] + hist[1], 0);
        for d in 2..=7 {
            assert!(hist[d] > 0, "{hist:?}");
        }
    }

    #[test]
    fn init_is_seeded() {
        let a = init_population(&small_cfg(), &schemas(2)).unwrap();
        let b = init_population(&small_cfg(), &schemas(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn categorical_schema_rejected() {
        let s = vec![VariableSchema::numerical("a"), VariableSchema::categorical("b", ["u", "v"])];
        assert!(matches!(
            init_population(&small_cfg(), &s),
            Err(Error::UnsupportedSchema(_))
        ));
    }

    #[test]
    fn constant_tree_scores_zero() {
        let x = correlated(40, 1);
        let mut ind = GpIndividual::unscored(vec![GpNode::Const(2.0), GpNode::Var]);
        score(&mut ind, &x, 1);
        assert_eq!(ind.fitness[0], 0.0);
        assert_abs_diff_eq!(ind.global, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_generations_return_best_initial() {
        let x = correlated(80, 2);
        let data = GpData {
            schemas: &schemas(2),
            train: &x,
            validation: &x,
        };
        let cfg = GpConfig {
            generations: 0,
            ..small_cfg()
        };
        let out = evolve(data, &cfg, 1).unwrap();
        let mut pop = init_population(&cfg, data.schemas).unwrap();
        pop.iter_mut().for_each(|ind| score(ind, &x, 1));
        assert_eq!(out.best, pop[best_global(&pop)]);
        assert!(out.history.is_empty());
    }

    #[test]
    fn elitism_keeps_best_fitness_monotone() {
        let x = correlated(100, 4);
        let data = GpData {
            schemas: &schemas(2),
            train: &x,
            validation: &x,
        };
        let out = evolve(data, &small_cfg(), 1).unwrap();
        for pair in out.best_fitness.windows(2) {
            for l in 0..2 {
                assert!(pair[1][l] >= pair[0][l]);
            }
        }
        for pair in out.history.windows(2) {
            assert!(pair[1].train_objective >= pair[0].train_objective - 1e-12);
        }
        let again = evolve(data, &small_cfg(), 1).unwrap();
        assert_eq!(out.best, again.best);
    }

    #[test]
    fn expressions_use_column_names() {
        let ind = GpIndividual::unscored(vec![
            GpNode::unary(UnaryOp::Sin, GpNode::Var),
            GpNode::Var,
        ]);
        assert_eq!(
            ind.expressions(&["a".into(), "b".into()]),
            vec!["a -> sin(a)".to_string(), "b -> b".to_string()]
        );
    }
}
