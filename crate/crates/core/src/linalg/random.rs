//! Deterministic pseudo-random sources.
//!
//! All randomness in the toolkit flows through [`GaussianRng`]: a ChaCha8
//! stream cipher keyed by `seed_from_u64(seed)` (counter-based, identical
//! output on every platform), uniforms built from the top 53 bits of each
//! 64-bit word, and normals from the Box–Muller transform with the second
//! variate of each pair cached.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::{dot, Matrix};
use super::LinalgError;

#[derive(Debug, Clone)]
pub struct GaussianRng {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - U lies in (0, 1], so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        // Lemire-style rejection keeps the draw unbiased.
        let n64 = n as u64;
        let zone = u64::MAX - (u64::MAX % n64);
        loop {
            let x = self.inner.next_u64();
            if x < zone {
                return (x % n64) as usize;
            }
        }
    }

    /// Fisher–Yates.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn normal_vec(&mut self, len: usize, sd: f64) -> Vec<f64> {
        (0..len).map(|_| sd * self.standard_normal()).collect()
    }
}

/// `m×n` matrix of i.i.d. `N(0, sigma²)` entries, filled row-major.
pub fn gaussian_matrix(m: usize, n: usize, sigma: f64, seed: u64) -> Result<Matrix, LinalgError> {
    if m == 0 || n == 0 {
        return Err(LinalgError::Empty);
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(LinalgError::InvalidSigma(sigma));
    }
    let mut rng = GaussianRng::new(seed);
    Ok(Matrix::from_vec(m, n, rng.normal_vec(m * n, sigma)))
}

/// Haar-distributed `n×n` orthogonal matrix: Gram–Schmidt (two passes) on a
/// Gaussian matrix, which implicitly fixes `diag(R) > 0`.
pub fn random_orthogonal(n: usize, seed: u64) -> Matrix {
    assert!(n > 0);
    let mut rng = GaussianRng::new(seed);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut c = rng.normal_vec(n, 1.0);
        for _ in 0..2 {
            for q in &cols {
                let p = dot(q, &c);
                c.iter_mut().zip(q).for_each(|(x, y)| *x -= p * y);
            }
        }
        let norm = dot(&c, &c).sqrt();
        if norm > 1e-6 {
            c.iter_mut().for_each(|x| *x /= norm);
            cols.push(c);
        }
    }
    Matrix::from_columns(&cols)
}

/// Uniformly random unit vector in `R^n`.
pub fn random_unit_vector(n: usize, rng: &mut GaussianRng) -> Vec<f64> {
    loop {
        let mut v = rng.normal_vec(n, 1.0);
        let norm = dot(&v, &v).sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}
