//! Seeded random sources. ChaCha8 keeps streams identical across
//! platforms and releases of `rand`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::Matrix;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut SeededRng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

pub fn normal(rng: &mut SeededRng, rows: usize, cols: usize, std: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    })
}

/// Normal weights scaled by `1 / sqrt(fan_in)`.
pub fn fan_in(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    normal(rng, rows, cols, 1.0 / (rows.max(1) as f64).sqrt())
}
