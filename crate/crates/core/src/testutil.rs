use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::Matrix;
use crate::model::{MultiViewDesign, Preprocess};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// Uncentered design with `X^T X = n I`.
pub fn orthogonal_design(rng: &mut ChaCha8Rng, n: usize, view_sizes: &[usize]) -> MultiViewDesign {
    let p: usize = view_sizes.iter().sum();
    let q = normal(rng, n, p).qr().q() * (n as f64).sqrt();
    MultiViewDesign::from_full(q, view_sizes.to_vec(), Preprocess::NONE).unwrap()
}

pub fn design(rng: &mut ChaCha8Rng, n: usize, view_sizes: &[usize], preprocess: Preprocess) -> MultiViewDesign {
    let p: usize = view_sizes.iter().sum();
    MultiViewDesign::from_full(normal(rng, n, p), view_sizes.to_vec(), preprocess).unwrap()
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
