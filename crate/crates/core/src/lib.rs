//! Non-linear principal component analysis.
//!
//! Every input variable gets its own scalar transformation (a small neural
//! network, or a symbolic tree when using genetic programming). The
//! transformations are trained so that linear PCA on the transformed table
//! explains as much variance as possible in the leading `k` components, using
//! either the summed top-`k` eigenvalues or each variable's own contribution
//! to those eigenvalues as the fitness signal.
//!
//! Linear PCA and kernel PCA baselines plus a seeded experiment harness are
//! included for comparison.

pub mod baselines;
pub mod data;
pub mod error;
pub mod es;
pub mod gp;
pub mod harness;
pub mod pca;
pub mod transforms;

pub use error::{Error, Result};

/// Dense row-major-agnostic matrix type used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;

/// Deterministic, portable RNG used everywhere a seed is accepted.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate RNG from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
