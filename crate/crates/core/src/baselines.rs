//! Linear PCA and kernel PCA reference methods.
//!
//! Both consume the expanded numerical encoding of a table (one-hot
//! categorical columns, ordinal positions) standardized with training
//! statistics.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DataTable, SplitPair};
use crate::pca::{self, PcaModel, Standardizer};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
    Polynomial,
    Cosine,
    Sigmoid,
    Linear,
}

impl KernelKind {
    /// Kernels compared by [`best_of_kernels`], in tie-breaking order.
    pub const COMPARED: [KernelKind; 4] = [
        KernelKind::Rbf,
        KernelKind::Polynomial,
        KernelKind::Cosine,
        KernelKind::Sigmoid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Rbf => "rbf",
            KernelKind::Polynomial => "poly",
            KernelKind::Cosine => "cos",
            KernelKind::Sigmoid => "sigmoid",
            KernelKind::Linear => "linear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub gamma: f64,
    pub coef0: f64,
    pub degree: i32,
}

impl KernelSpec {
    /// `gamma = 1/p`, `coef0 = 1`, `degree = 2`.
    pub fn with_defaults(kind: KernelKind, p: usize) -> Self {
        Self {
            kind,
            gamma: 1.0 / p.max(1) as f64,
            coef0: 1.0,
            degree: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let uses_gamma = matches!(
            self.kind,
            KernelKind::Rbf | KernelKind::Polynomial | KernelKind::Sigmoid
        );
        if uses_gamma && !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("kernel gamma {} must be positive", self.gamma)));
        }
        if self.kind == KernelKind::Polynomial && self.degree < 1 {
            return Err(Error::Config(format!("polynomial degree {} must be at least 1", self.degree)));
        }
        Ok(())
    }

    fn eval(&self, x: &[f64], y: &[f64], nx: f64, ny: f64) -> f64 {
        let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        match self.kind {
            KernelKind::Rbf => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-self.gamma * d2).exp()
            }
            KernelKind::Polynomial => (self.gamma * dot + self.coef0).powi(self.degree),
            KernelKind::Cosine => {
                if nx == 0.0 || ny == 0.0 {
                    0.0
                } else {
                    dot / (nx * ny)
                }
            }
            KernelKind::Sigmoid => (self.gamma * dot + self.coef0).tanh(),
            KernelKind::Linear => dot,
        }
    }
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Gram matrix between the rows of `a` and the rows of `b`.
pub fn kernel_matrix(spec: &KernelSpec, a: &Matrix, b: &Matrix) -> Result<Matrix> {
    spec.validate()?;
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!("{} vs {} columns", a.ncols(), b.ncols())));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("kernel inputs must be finite".into()));
    }
    let ra = rows(a);
    let rb = rows(b);
    let na: Vec<f64> = ra.iter().map(|r| norm(r)).collect();
    let nb: Vec<f64> = rb.iter().map(|r| norm(r)).collect();
    let values: Vec<Vec<f64>> = ra
        .par_iter()
        .zip(&na)
        .map(|(x, &nx)| rb.iter().zip(&nb).map(|(y, &ny)| spec.eval(x, y, nx, ny)).collect())
        .collect();
    Ok(Matrix::from_fn(ra.len(), rb.len(), |i, j| values[i][j]))
}

/// Double-centered copy of a square kernel matrix.
pub fn center_kernel(k: &Matrix) -> Matrix {
    let n = k.nrows() as f64;
    let col_means: Vec<f64> = k.column_iter().map(|c| c.sum() / n).collect();
    let row_means: Vec<f64> = k.row_iter().map(|r| r.sum() / n).collect();
    let grand = col_means.iter().sum::<f64>() / n;
    Matrix::from_fn(k.nrows(), k.ncols(), |i, j| k[(i, j)] - row_means[i] - col_means[j] + grand)
}

/// Kernel PCA fitted on standardized training rows.
#[derive(Debug, Clone)]
pub struct KpcaFit {
    pub spec: KernelSpec,
    pub standardizer: Standardizer,
    train: Matrix,
    /// Positive eigenvalues of the centered training kernel, descending.
    pub eigenvalues: Vec<f64>,
    /// Expansion coefficients scaled so every feature-space axis has unit
    /// norm; one column per retained eigenvalue.
    alphas: Matrix,
    col_means: DVector<f64>,
    grand_mean: f64,
}

impl KpcaFit {
    pub fn n_input_columns(&self) -> usize {
        self.train.ncols()
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Coordinates of `x` (raw, unstandardized rows) on the first `r` axes.
    pub fn project(&self, x: &Matrix, r: usize) -> Result<Matrix> {
        let xs = self.standardizer.apply(x)?;
        let kv = kernel_matrix(&self.spec, &xs, &self.train)?;
        let n = self.train.nrows() as f64;
        let row_means: Vec<f64> = kv.row_iter().map(|row| row.sum() / n).collect();
        let centered = Matrix::from_fn(kv.nrows(), kv.ncols(), |i, j| {
            kv[(i, j)] - row_means[i] - self.col_means[j] + self.grand_mean
        });
        Ok(centered * self.alphas.columns(0, r.min(self.rank())))
    }
}

pub fn kpca_fit(train: &Matrix, spec: &KernelSpec) -> Result<KpcaFit> {
    if train.nrows() < 2 {
        return Err(Error::InsufficientRows {
            needed: 2,
            got: train.nrows(),
        });
    }
    let standardizer = Standardizer::fit(train)?;
    let xs = standardizer.apply(train)?;
    let k = kernel_matrix(spec, &xs, &xs)?;
    let n = k.nrows() as f64;
    let col_means = DVector::from_iterator(k.ncols(), k.column_iter().map(|c| c.sum() / n));
    let grand_mean = col_means.sum() / n;
    let kc = center_kernel(&k);
    let eig = pca::eig_sym(&kc)?;
    let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let cutoff = top * 1e-10;
    let rank = eig.values.iter().take_while(|&&v| v > cutoff && v > 0.0).count();
    let eigenvalues = eig.values[..rank].to_vec();
    let mut alphas = Matrix::zeros(k.nrows(), rank);
    for j in 0..rank {
        let scale = eigenvalues[j].sqrt();
        for i in 0..k.nrows() {
            alphas[(i, j)] = eig.vectors[(j, i)] / scale;
        }
    }
    Ok(KpcaFit {
        spec: *spec,
        standardizer,
        train: xs,
        eigenvalues,
        alphas,
        col_means,
        grand_mean,
    })
}

/// What the projected variance is divided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KpcaDenominator {
    /// Variance captured by the first `p` kernel axes, `p` being the number
    /// of input columns.
    #[default]
    LeadingComponents,
    /// Total variance of the validation rows in feature space.
    FeatureSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpcaScore {
    pub proportion: f64,
    pub components: usize,
    /// Set when fewer than `k` positive components were available.
    pub truncated: bool,
}

pub fn kpca_validation_proportion(fit: &KpcaFit, validation: &Matrix, k: usize) -> Result<KpcaScore> {
    kpca_validation_proportion_with(fit, validation, k, KpcaDenominator::default())
}

pub fn kpca_validation_proportion_with(
    fit: &KpcaFit,
    validation: &Matrix,
    k: usize,
    denominator: KpcaDenominator,
) -> Result<KpcaScore> {
    if validation.nrows() < 2 {
        return Err(Error::InsufficientRows {
            needed: 2,
            got: validation.nrows(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let components = k.min(fit.rank());
    let width = match denominator {
        KpcaDenominator::LeadingComponents => fit.n_input_columns().max(components).min(fit.rank()),
        KpcaDenominator::FeatureSpace => components,
    };
    let z = fit.project(validation, width)?;
    let variances: Vec<f64> = z
        .column_iter()
        .map(|c| pca::column_variance(c.iter()))
        .collect();
    let captured: f64 = variances[..components].iter().sum();
    let total = match denominator {
        KpcaDenominator::LeadingComponents => variances.iter().sum::<f64>(),
        KpcaDenominator::FeatureSpace => {
            let xs = fit.standardizer.apply(validation)?;
            let kvv = center_kernel(&kernel_matrix(&fit.spec, &xs, &xs)?);
            kvv.trace() / (validation.nrows() - 1) as f64
        }
    };
    let proportion = if total > 0.0 { captured / total } else { 0.0 };
    Ok(KpcaScore {
        proportion,
        components,
        truncated: components < k,
    })
}

/// Linear PCA fitted on the training rows, scored on the validation rows.
pub fn linear_pca_baseline(table: &DataTable, split: &SplitPair, k: usize) -> Result<f64> {
    let train = table.expanded_matrix(&split.train);
    let model = PcaModel::fit(&train)?;
    pca::explained_variance_validation(&model, &table.expanded_matrix(&split.validation), k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelChoice {
    pub proportion: f64,
    pub kernel: KernelKind,
    /// Kernels that failed and were left out, with the reason.
    pub skipped: Vec<(KernelKind, String)>,
}

/// Scores every compared kernel with its defaults and keeps the best.
pub fn best_of_kernels(table: &DataTable, split: &SplitPair, k: usize) -> Result<KernelChoice> {
    let train = table.expanded_matrix(&split.train);
    let validation = table.expanded_matrix(&split.validation);
    best_of_kernels_matrix(&train, &validation, k)
}

pub fn best_of_kernels_matrix(train: &Matrix, validation: &Matrix, k: usize) -> Result<KernelChoice> {
    best_kernel(train, validation, k).map(|(choice, _)| choice)
}

/// Like [`best_of_kernels_matrix`], also returning the winning fit.
pub fn best_kernel(train: &Matrix, validation: &Matrix, k: usize) -> Result<(KernelChoice, KpcaFit)> {
    let p = train.ncols();
    let scores: Vec<(KernelKind, Result<(f64, KpcaFit)>)> = KernelKind::COMPARED
        .par_iter()
        .map(|&kind| {
            let spec = KernelSpec::with_defaults(kind, p);
            let score = kpca_fit(train, &spec).and_then(|fit| {
                kpca_validation_proportion(&fit, validation, k).map(|s| (s.proportion, fit))
            });
            (kind, score)
        })
        .collect();
    let mut best: Option<(KernelKind, f64, KpcaFit)> = None;
    let mut skipped = Vec::new();
    for (kind, score) in scores {
        match score {
            Ok((v, fit)) if v.is_finite() => {
                if best.as_ref().is_none_or(|(_, b, _)| v > *b) {
                    best = Some((kind, v, fit));
                }
            }
            Ok((v, _)) => skipped.push((kind, format!("non-finite proportion {v}"))),
            Err(e) => skipped.push((kind, e.to_string())),
        }
    }
    let (kernel, proportion, fit) = best.ok_or_else(|| {
        Error::InvalidData(format!(
            "every kernel failed: {}",
            skipped
                .iter()
                .map(|(k, e)| format!("{}: {e}", k.name()))
                .collect::<Vec<_>>()
                .join("; ")
        ))
    })?;
    let choice = KernelChoice {
        proportion,
        kernel,
        skipped,
    };
    Ok((choice, fit))
}
