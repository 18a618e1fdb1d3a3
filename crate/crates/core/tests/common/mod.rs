#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use viewstream::linalg::Matrix;
use viewstream::view_model::circular_distance;

pub struct TestRng(ChaCha8Rng);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn log_range(&mut self, lo: f64, hi: f64) -> f64 {
        self.range(lo.ln(), hi.ln()).exp()
    }

    /// Integer in `lo..=hi`.
    pub fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.0.next_u64() % (hi - lo + 1) as u64) as usize
    }
}

fn normalise(rows: &mut [Vec<f64>]) {
    for row in rows.iter_mut() {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
        // Push the rounding residue onto the largest entry.
        let s: f64 = row.iter().sum();
        let (imax, _) = row.iter().enumerate().fold((0, 0.0), |b, (i, &x)| if x > b.1 { (i, x) } else { b });
        row[imax] += 1.0 - s;
    }
}

/// Random banded stochastic matrix with strictly positive in-band entries.
pub fn random_banded(k: usize, v_max: usize, rng: &mut TestRng) -> Matrix {
    let mut rows = vec![vec![0.0; k]; k];
    for (i, row) in rows.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            if circular_distance(i, j, k) <= v_max {
                *x = rng.range(0.05, 1.0);
            }
        }
    }
    normalise(&mut rows);
    Matrix::from_rows(&rows)
}

/// Random circulant banded stochastic matrix.
pub fn random_circulant(k: usize, v_max: usize, rng: &mut TestRng) -> Matrix {
    let mut kernel = vec![0.0; k];
    for (d, x) in kernel.iter_mut().enumerate() {
        if circular_distance(0, d, k) <= v_max {
            *x = rng.range(0.05, 1.0);
        }
    }
    let s: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|x| *x /= s);
    let rows: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| kernel[(j + k - i) % k]).collect()).collect();
    Matrix::from_rows(&rows)
}

pub fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    let k = m.dim();
    DMatrix::from_fn(k, k, |i, j| m[(i, j)])
}

/// Stationary distribution by a direct LU solve of `(P^T - I) q = 0` with the
/// last equation replaced by `sum q = 1`.
pub fn lu_steady_state(p: &Matrix) -> Vec<f64> {
    let k = p.dim();
    let mut a = to_dmatrix(p).transpose() - DMatrix::<f64>::identity(k, k);
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(k);
    b[k - 1] = 1.0;
    let q = a.lu().solve(&b).expect("irreducible chain");
    q.iter().copied().collect()
}

/// Width-`(1 + 2a)` circulant window.
pub fn fov_oracle(k: usize, a: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, k, |i, j| if circular_distance(i, j, k) <= a { 1.0 } else { 0.0 })
}

/// `P^steps C_a` by plain repeated multiplication.
pub fn weights_oracle(p: &Matrix, a: usize, steps: usize) -> DMatrix<f64> {
    let k = p.dim();
    let pm = to_dmatrix(p);
    let mut w = fov_oracle(k, a);
    for _ in 0..steps {
        w = &pm * &w;
    }
    w
}

pub fn clipped_laplacian(d: f64, sigma: f64, d_max: f64) -> f64 {
    if d < d_max {
        (-d / (sigma * sigma)).exp()
    } else {
        0.0
    }
}
