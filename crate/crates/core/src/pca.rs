//! Standardization, covariance, symmetric eigendecomposition and the two
//! variance objectives.
//!
//! Conventions used throughout:
//!
//! * standardization and covariance both use the sample divisor `n - 1`, so the
//!   covariance of standardized training data has an exact unit diagonal;
//! * eigenvectors are stored as the *rows* of the loading matrix `W`, sorted by
//!   descending eigenvalue, with the largest-magnitude entry of each row made
//!   positive (first index wins ties);
//! * component counts `k` are 1-based counts, variable indices are 0-based.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

/// Standard deviations below this are treated as a constant column.
pub const STD_FLOOR: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-10;
const NEGATIVE_EIGEN_TOL: f64 = 1e-10;

/// Per-column location and scale fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 {
            return Err(Error::InsufficientRows { needed: 2, got: n });
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value in column {}",
                pos / n
            )));
        }
        let mut means = Vec::with_capacity(p);
        let mut stds = Vec::with_capacity(p);
        for col in x.column_iter() {
            let mean = col.iter().sum::<f64>() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
            let std = (ss / (n - 1) as f64).sqrt();
            // Rounding in the mean of a constant column leaves residuals that
            // scale with |mean|; those must not be amplified to unit variance.
            let std = if std <= STD_FLOOR * mean.abs().max(1.0) {
                STD_FLOOR
            } else {
                std
            };
            means.push(mean);
            stds.push(std);
        }
        Ok(Self { means, stds })
    }

    pub fn n_columns(&self) -> usize {
        self.means.len()
    }

    /// True when the fitted column was constant; it standardizes to zero.
    pub fn is_constant(&self, col: usize) -> bool {
        self.stds[col] <= STD_FLOOR
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.ncols() != self.n_columns() {
            return Err(Error::Shape(format!(
                "standardizer fitted on {} columns, got {}",
                self.n_columns(),
                x.ncols()
            )));
        }
        let mut out = x.clone();
        for (c, mut col) in out.column_iter_mut().enumerate() {
            if self.is_constant(c) {
                col.fill(0.0);
            } else {
                let (m, s) = (self.means[c], self.stds[c]);
                col.apply(|v| *v = (*v - m) / s);
            }
        }
        Ok(out)
    }
}

pub fn fit_standardizer(x: &Matrix) -> Result<Standardizer> {
    Standardizer::fit(x)
}

/// Sample covariance (divisor `n - 1`) of the columns of `x`.
pub fn covariance(x: &Matrix) -> Result<Matrix> {
    let (n, p) = x.shape();
    if n < 2 {
        return Err(Error::InsufficientRows { needed: 2, got: n });
    }
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.iter().sum::<f64>() / n as f64;
        col.apply(|v| *v -= mean);
    }
    let mut s = centered.tr_mul(&centered) / (n - 1) as f64;
    // exact symmetry regardless of accumulation order
    for i in 0..p {
        for j in (i + 1)..p {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

/// Eigenpairs of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    /// Descending.
    pub values: Vec<f64>,
    /// Row `j` is the eigenvector for `values[j]`.
    pub vectors: Matrix,
}

pub fn eig_sym(s: &Matrix) -> Result<EigenDecomposition> {
    let (r, c) = s.shape();
    if r != c {
        return Err(Error::Shape(format!("expected a square matrix, got {r}x{c}")));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let scale = s.amax().max(1.0);
    let asym = (s - s.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::InvalidInput(format!(
            "matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::InvalidInput("eigendecomposition did not converge".into()))?;

    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut values = Vec::with_capacity(r);
    let mut vectors = Matrix::zeros(r, r);
    for (row, &idx) in order.iter().enumerate() {
        let mut lambda = eig.eigenvalues[idx];
        if lambda < 0.0 && lambda >= -NEGATIVE_EIGEN_TOL * scale {
            lambda = 0.0;
        }
        values.push(lambda);

        let v = eig.eigenvectors.column(idx);
        let mut pivot = 0;
        for i in 1..r {
            if v[i].abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..r {
            vectors[(row, i)] = sign * v[i];
        }
    }
    Ok(EigenDecomposition { values, vectors })
}

/// Linear PCA fitted on a (possibly transformed) training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub standardizer: Standardizer,
    pub eigenvalues: Vec<f64>,
    /// Rows are the principal axes.
    pub loadings: Matrix,
    /// Covariance of the standardized training data.
    pub covariance: Matrix,
    pub total_variance: f64,
}

impl PcaModel {
    pub fn fit(x: &Matrix) -> Result<Self> {
        let standardizer = Standardizer::fit(x)?;
        let z = standardizer.apply(x)?;
        let covariance = covariance(&z)?;
        let EigenDecomposition { values, vectors } = eig_sym(&covariance)?;
        let total_variance = covariance.trace();
        Ok(Self {
            standardizer,
            eigenvalues: values,
            loadings: vectors,
            covariance,
            total_variance,
        })
    }

    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn contributions(&self) -> ContributionMatrix {
        contributions_unchecked(&self.loadings, &self.covariance)
    }

    /// Fraction of training variance in the first `k` components.
    pub fn explained_proportion(&self, k: usize) -> f64 {
        if self.total_variance <= 0.0 {
            return 0.0;
        }
        self.eigenvalues.iter().take(k).sum::<f64>() / self.total_variance
    }
}

/// Scores `Z = standardize(X) W^T`.
pub fn project(model: &PcaModel, x: &Matrix) -> Result<Matrix> {
    let z = model.standardizer.apply(x)?;
    Ok(z * model.loadings.transpose())
}

/// Variance contribution `c[j][l]` of variable `l` to component `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionMatrix {
    pub entries: Matrix,
}

impl ContributionMatrix {
    pub fn n_variables(&self) -> usize {
        self.entries.ncols()
    }

    pub fn get(&self, component: usize, variable: usize) -> f64 {
        self.entries[(component, variable)]
    }

    /// `sum_{j<k} c[j][l]` for every variable, without range checks.
    pub fn partial_objectives(&self, k: usize) -> Vec<f64> {
        let k = k.min(self.entries.nrows());
        (0..self.n_variables())
            .map(|l| (0..k).map(|j| self.entries[(j, l)]).sum())
            .collect()
    }
}

pub fn contributions(loadings: &Matrix, covariance: &Matrix) -> Result<ContributionMatrix> {
    let p = covariance.nrows();
    if covariance.ncols() != p || loadings.ncols() != p || loadings.nrows() > p {
        return Err(Error::Shape(format!(
            "loadings {:?} incompatible with covariance {:?}",
            loadings.shape(),
            covariance.shape()
        )));
    }
    Ok(contributions_unchecked(loadings, covariance))
}

// c[j][l] = w[j][l] * (S w_j)[l], which expands to the variance term plus the
// covariance cross terms for variable l.
fn contributions_unchecked(loadings: &Matrix, covariance: &Matrix) -> ContributionMatrix {
    let ws = loadings * covariance;
    ContributionMatrix {
        entries: loadings.component_mul(&ws),
    }
}

fn check_k(k: usize, p: usize) -> Result<()> {
    if k == 0 || k >= p {
        return Err(Error::Config(format!(
            "number of components k={k} must satisfy 1 <= k < p={p}"
        )));
    }
    Ok(())
}

/// Sum of the leading `k` eigenvalues.
pub fn global_objective(eigenvalues: &[f64], k: usize) -> Result<f64> {
    check_k(k, eigenvalues.len())?;
    Ok(eigenvalues[..k].iter().sum())
}

/// Variable `variable`'s summed contribution to the leading `k` eigenvalues.
pub fn partial_objective(c: &ContributionMatrix, variable: usize, k: usize) -> Result<f64> {
    let p = c.n_variables();
    check_k(k, p)?;
    if variable >= p {
        return Err(Error::Config(format!(
            "variable index {variable} out of range for {p} variables"
        )));
    }
    Ok((0..k).map(|j| c.entries[(j, variable)]).sum())
}

/// Explained-variance proportion of the first `k` training components on
/// held-out rows, relative to the total variance of the held-out rows after
/// applying the training standardizer. `k == p` is allowed and gives 1.
pub fn explained_variance_validation(model: &PcaModel, x_val: &Matrix, k: usize) -> Result<f64> {
    let p = model.n_components();
    if k == 0 || k > p {
        return Err(Error::Config(format!(
            "number of components k={k} must satisfy 1 <= k <= p={p}"
        )));
    }
    if x_val.nrows() < 2 {
        return Err(Error::InsufficientRows {
            needed: 2,
            got: x_val.nrows(),
        });
    }
    let z = model.standardizer.apply(x_val)?;
    let total: f64 = z.column_iter().map(|c| column_variance(c.iter())).sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    let scores = z * model.loadings.rows(0, k).transpose();
    let explained: f64 = scores.column_iter().map(|c| column_variance(c.iter())).sum();
    Ok(explained / total)
}

pub(crate) fn column_variance<'a>(values: impl Iterator<Item = &'a f64> + Clone) -> f64 {
    let n = values.clone().count();
    if n < 2 {
        return 0.0;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
}
