//! Shared helpers for unit tests: random inputs and the finite-difference
//! oracle used to validate analytic gradients.

use crate::linalg::{sym_eig, Matrix};
use rand::prelude::*;
use rand_distr::StandardNormal;

pub fn randn_vec(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn randn_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::new(rows, cols, randn_vec(rows * cols, rng)).unwrap()
}

pub fn random_symmetric(n: usize, rng: &mut impl Rng) -> Matrix {
    let a = randn_matrix(n, n, rng);
    a.add(&a.transpose()).unwrap().scale(0.5)
}

/// Random SPD matrix with eigenvalues log-uniform in `[eig_lo, eig_hi]`.
pub fn random_spd(n: usize, eig_lo: f64, eig_hi: f64, rng: &mut impl Rng) -> Matrix {
    let q = sym_eig(&random_symmetric(n, rng)).unwrap().eigenvectors;
    let lam: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            eig_lo * (eig_hi / eig_lo).powf(u)
        })
        .collect();
    let d = Matrix::diag(&lam);
    q.matmul(&d)
        .unwrap()
        .matmul(&q.transpose())
        .unwrap()
        .symmetrized()
}

/// Central finite differences of a scalar function at `x`.
pub fn fd_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let hi = f(&probe);
        probe[i] = x[i] - step;
        let lo = f(&probe);
        probe[i] = x[i];
        grad[i] = (hi - lo) / (2.0 * step);
    }
    grad
}

/// Gradient-check metric: |a - b| relative to the larger magnitude, with a
/// floor of 1 so near-zero entries are compared absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}
