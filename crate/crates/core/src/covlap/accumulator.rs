use super::CovError;
use crate::linalg::Matrix;
use crate::tensorstore::ActivationBatch;

/// Mergeable running mean and co-moment (sum of outer products of
/// deviations). Batches are reduced two-pass and merged pairwise, which keeps
/// the update stable for large offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct CovAccumulator {
    dim: usize,
    count: u64,
    mean: Vec<f64>,
    comoment: Matrix,
}

impl CovAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            count: 0,
            mean: vec![0.0; dim],
            comoment: Matrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn comoment(&self) -> &Matrix {
        &self.comoment
    }

    /// Adds each row of `rows` (`[samples, dim]`) as one sample.
    pub fn update_rows(&mut self, rows: &Matrix) -> Result<(), CovError> {
        if rows.cols() != self.dim {
            return Err(CovError::DimensionMismatch {
                expected: self.dim,
                found: rows.cols(),
            });
        }
        if rows.rows() == 0 {
            return Ok(());
        }
        if !rows.is_finite() {
            return Err(CovError::NonFinite);
        }
        let n = rows.rows();
        let mut mean = vec![0.0; self.dim];
        for i in 0..n {
            for (m, x) in mean.iter_mut().zip(rows.row(i)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut centered = rows.clone();
        for i in 0..n {
            for (x, m) in centered.row_mut(i).iter_mut().zip(&mean) {
                *x -= m;
            }
        }
        let batch = Self {
            dim: self.dim,
            count: n as u64,
            mean,
            comoment: centered.matmul_tn(&centered),
        };
        self.merge(&batch)
    }

    pub fn update(&mut self, batch: &ActivationBatch) -> Result<(), CovError> {
        self.update_rows(&batch.values)
    }

    /// Pairwise combination of two accumulators over disjoint samples.
    pub fn merge(&mut self, other: &CovAccumulator) -> Result<(), CovError> {
        if other.dim != self.dim {
            return Err(CovError::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            *self = other.clone();
            return Ok(());
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let total = na + nb;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d * nb / total;
        }
        let c = self.comoment.as_mut_slice();
        for (x, y) in c.iter_mut().zip(other.comoment.as_slice()) {
            *x += y;
        }
        self.comoment.add_outer(na * nb / total, &delta, &delta);
        self.count += other.count;
        Ok(())
    }

    /// Population covariance `comoment / count`, exactly symmetric.
    pub fn finalize(&self) -> Result<Matrix, CovError> {
        if self.count < 2 {
            return Err(CovError::TooFewSamples(self.count));
        }
        let inv = 1.0 / self.count as f64;
        let c = &self.comoment;
        Ok(Matrix::from_fn(self.dim, self.dim, |i, j| {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            0.5 * (c[(a, b)] + c[(b, a)]) * inv
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigh, gaussian_matrix};

    fn two_pass(x: &Matrix) -> Matrix {
        let (n, d) = x.shape();
        let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64).collect();
        Matrix::from_fn(d, d, |a, b| {
            (0..n).map(|i| (x[(i, a)] - mean[a]) * (x[(i, b)] - mean[b])).sum::<f64>() / n as f64
        })
    }

    fn rows(x: &Matrix, r: std::ops::Range<usize>) -> Matrix {
        Matrix::from_fn(r.len(), x.cols(), |i, j| x[(r.start + i, j)])
    }

    fn max_diff(a: &Matrix, b: &Matrix) -> f64 {
        a.sub(b).max_abs()
    }

    #[test]
    fn hand_case() {
        let mut acc = CovAccumulator::new(2);
        acc.update_rows(&Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]])).unwrap();
        assert_eq!(acc.finalize().unwrap(), Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]));
    }

    #[test]
    fn constant_and_degenerate_inputs() {
        let mut acc = CovAccumulator::new(3);
        assert!(matches!(acc.finalize(), Err(CovError::TooFewSamples(0))));
        acc.update_rows(&Matrix::from_fn(1, 3, |_, j| j as f64)).unwrap();
        assert!(matches!(acc.finalize(), Err(CovError::TooFewSamples(1))));
        acc.update_rows(&Matrix::from_fn(5, 3, |_, j| j as f64)).unwrap();
        assert_eq!(acc.finalize().unwrap().max_abs(), 0.0);
        assert!(matches!(
            acc.update_rows(&Matrix::zeros(2, 4)),
            Err(CovError::DimensionMismatch { expected: 3, found: 4 })
        ));
        let fresh = CovAccumulator::new(3);
        assert_eq!(fresh.count(), 0);
        assert!(fresh.mean().iter().all(|&m| m == 0.0));
        assert_eq!(fresh.comoment().max_abs(), 0.0);
    }

    #[test]
    fn batches_match_concatenation() {
        let mut x = gaussian_matrix(300, 16, 2.0, 8).unwrap();
        // large common offset stresses the merge
        x.as_mut_slice().iter_mut().for_each(|v| *v += 1e3);
        let want = two_pass(&x);
        let mut acc = CovAccumulator::new(16);
        acc.update_rows(&rows(&x, 0..37)).unwrap();
        acc.update_rows(&rows(&x, 37..300)).unwrap();
        assert!(max_diff(&acc.finalize().unwrap(), &want) < 1e-10);
        let mut whole = CovAccumulator::new(16);
        whole.update_rows(&x).unwrap();
        assert!(max_diff(&acc.finalize().unwrap(), &whole.finalize().unwrap()) < 1e-10);
    }

    #[test]
    fn merge_is_associative() {
        let x = gaussian_matrix(90, 8, 1.0, 3).unwrap();
        let part = |r| {
            let mut a = CovAccumulator::new(8);
            a.update_rows(&rows(&x, r)).unwrap();
            a
        };
        let (a, b, c) = (part(0..20), part(20..61), part(61..90));
        let mut left = a.clone();
        left.merge(&b).unwrap();
        left.merge(&c).unwrap();
        let mut bc = b.clone();
        bc.merge(&c).unwrap();
        let mut right = a.clone();
        right.merge(&bc).unwrap();
        assert_eq!(left.count(), right.count());
        assert!(max_diff(&left.finalize().unwrap(), &right.finalize().unwrap()) < 1e-10);
    }

    #[test]
    fn finalized_is_symmetric_psd() {
        let x = gaussian_matrix(40, 24, 1.0, 17).unwrap();
        let mut acc = CovAccumulator::new(24);
        acc.update_rows(&x).unwrap();
        let f = acc.finalize().unwrap();
        assert_eq!(f.asymmetry(), 0.0);
        let e = eigh(&f).unwrap();
        let min = e.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-8 * f.frobenius_norm());
    }
}
