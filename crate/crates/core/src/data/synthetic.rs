//! Synthetic benchmark datasets: nested circles, nested spheres and
//! alternating stripes.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::DataTable;
use crate::{rng_from_seed, Error, Matrix, Result};

pub const SYNTHETIC_ROWS: usize = 1000;
/// Standard deviation of the additive Gaussian noise.
pub const SYNTHETIC_NOISE: f64 = 0.1;
/// Inner-to-outer circle radius ratio.
pub const CIRCLES_FACTOR: f64 = 0.1;
pub const SPHERE_RADII: (f64, f64) = (1.0, 0.1);
pub const STRIPE_RANGE: std::ops::RangeInclusive<i32> = -4..=4;

pub const BUILTIN_DATASETS: [&str; 3] = ["circles", "spheres", "stripes"];

fn noise_dist(noise: f64) -> Result<Option<Normal<f64>>> {
    if noise < 0.0 || !noise.is_finite() {
        return Err(Error::Config(format!("noise {noise} must be a finite non-negative number")));
    }
    Ok(if noise > 0.0 {
        Some(Normal::new(0.0, noise).unwrap())
    } else {
        None
    })
}

/// Two concentric circles: `n / 2` points evenly spaced on the unit circle,
/// the rest on a circle of radius `factor`, plus per-coordinate noise.
pub fn gen_circles(n: usize, factor: f64, noise: f64, seed: u64) -> Result<DataTable> {
    let dist = noise_dist(noise)?;
    let mut rng = rng_from_seed(seed);
    let n_outer = n / 2;
    let n_inner = n - n_outer;
    let mut data = Matrix::zeros(n, 2);
    let mut row = 0;
    for (count, radius) in [(n_outer, 1.0), (n_inner, factor)] {
        for i in 0..count {
            let angle = 2.0 * PI * i as f64 / count as f64;
            data[(row, 0)] = radius * angle.cos();
            data[(row, 1)] = radius * angle.sin();
            row += 1;
        }
    }
    if let Some(d) = dist {
        data.apply(|v| *v += d.sample(&mut rng));
    }
    DataTable::from_numeric(&["x1", "x2"], &data)
}

/// Two concentric spheres covered by the golden-angle spiral, plus
/// per-coordinate noise.
pub fn gen_spheres(n: usize, radii: (f64, f64), noise: f64, seed: u64) -> Result<DataTable> {
    let dist = noise_dist(noise)?;
    let mut rng = rng_from_seed(seed);
    let golden_angle = PI * (3.0 - 5f64.sqrt());
    let n_outer = n / 2;
    let n_inner = n - n_outer;
    let mut data = Matrix::zeros(n, 3);
    let mut row = 0;
    for (count, radius) in [(n_outer, radii.0), (n_inner, radii.1)] {
        for i in 0..count {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let ring = (1.0 - y * y).sqrt();
            let phi = golden_angle * i as f64;
            data[(row, 0)] = radius * ring * phi.cos();
            data[(row, 1)] = radius * y;
            data[(row, 2)] = radius * ring * phi.sin();
            row += 1;
        }
    }
    if let Some(d) = dist {
        data.apply(|v| *v += d.sample(&mut rng));
    }
    DataTable::from_numeric(&["x1", "x2", "x3"], &data)
}

/// Alternating stripes: `x1 = s * pi + e`, `x2 = e` with a stripe index `s`
/// drawn uniformly from `-4..=4` and one shared noise draw `e` per row.
pub fn gen_stripes(n: usize, seed: u64) -> Result<DataTable> {
    let dist = Normal::new(0.0, SYNTHETIC_NOISE).unwrap();
    let mut rng = rng_from_seed(seed);
    let mut data = Matrix::zeros(n, 2);
    for i in 0..n {
        let stripe = rng.random_range(STRIPE_RANGE) as f64;
        let eps = dist.sample(&mut rng);
        data[(i, 0)] = stripe * PI + eps;
        data[(i, 1)] = eps;
    }
    DataTable::from_numeric(&["x1", "x2"], &data)
}

/// One of [`BUILTIN_DATASETS`] with its default parameters.
pub fn builtin(name: &str, seed: u64) -> Result<DataTable> {
    match name {
        "circles" => gen_circles(SYNTHETIC_ROWS, CIRCLES_FACTOR, SYNTHETIC_NOISE, seed),
        "spheres" => gen_spheres(SYNTHETIC_ROWS, SPHERE_RADII, SYNTHETIC_NOISE, seed),
        "stripes" => gen_stripes(SYNTHETIC_ROWS, seed),
        other => Err(Error::Config(format!(
            "unknown dataset {other:?}; built-in datasets are {}",
            BUILTIN_DATASETS.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pca::PcaModel;

    fn rows(t: &DataTable) -> Matrix {
        t.numeric_matrix(&(0..t.n_rows()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn noiseless_circles_radii() {
        let m = rows(&gen_circles(1000, 0.1, 0.0, 1).unwrap());
        for r in m.row_iter() {
            let radius = r.norm();
            assert!((radius - 1.0).abs() < 1e-12 || (radius - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn outer_circle_mean_radius() {
        let m = rows(&gen_circles(1000, 0.1, 0.1, 2).unwrap());
        let mean: f64 = (0..500).map(|i| m.row(i).norm()).sum::<f64>() / 500.0;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn generators_are_seeded() {
        for name in BUILTIN_DATASETS {
            assert_eq!(builtin(name, 5).unwrap(), builtin(name, 5).unwrap());
            assert_ne!(builtin(name, 5).unwrap(), builtin(name, 6).unwrap());
        }
        assert!(builtin("moons", 0).is_err());
    }

    #[test]
    fn noiseless_spheres_norms() {
        let m = rows(&gen_spheres(1000, SPHERE_RADII, 0.0, 1).unwrap());
        for (i, r) in m.row_iter().enumerate() {
            let expected = if i < 500 { 1.0 } else { 0.1 };
            assert!((r.norm() - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn unit_sphere_spacing_is_even() {
        let m = rows(&gen_spheres(1000, SPHERE_RADII, 0.0, 1).unwrap());
        let pts: Vec<_> = (0..500).map(|i| m.row(i).into_owned()).collect();
        let nn: Vec<f64> = pts
            .iter()
            .enumerate()
            .map(|(i, a)| {
                pts.iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, b)| (a - b).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let mean = nn.iter().sum::<f64>() / nn.len() as f64;
        let sd = (nn.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / nn.len() as f64).sqrt();
        assert!(sd / mean < 0.5, "cv {}", sd / mean);
    }

    #[test]
    fn stripes_shape() {
        let m = rows(&gen_stripes(1000, 3).unwrap());
        let near = (0..1000)
            .filter(|&i| {
                let x = m[(i, 0)];
                (x - (x / PI).round() * PI).abs() < 0.5
            })
            .count();
        assert!(near as f64 / 1000.0 > 0.99);
        let mean_x2 = m.column(1).mean();
        assert!(mean_x2.abs() < 0.02);
        let model = PcaModel::fit(&m).unwrap();
        let first = model.explained_proportion(1);
        assert!((0.45..=0.55).contains(&first), "{first}");
    }
}
