#![allow(dead_code)]

use plain_core::{CMatrix, Tensor, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cplx(r: &mut ChaCha8Rng) -> C64 {
    C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
}

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_| cplx(&mut r))
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> CMatrix<f64> {
    let mut r = rng(seed);
    CMatrix::from_fn(rows, cols, |_, _| cplx(&mut r))
}

pub fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// Row-major element of a 3-way tensor by explicit strides.
pub fn at3(t: &Tensor<f64>, i: usize, j: usize, k: usize) -> C64 {
    let s = t.shape();
    t.data()[(i * s[1] + j) * s[2] + k]
}
