//! Spectral removal: zero selected singular values of a weight matrix and
//! rebuild it, by rank decile, by cumulative singular-value mass or by an
//! explicit rank set. Ranks are 1-based over the descending spectrum.

mod plan;

pub use plan::{apply_plan, BlockScope, RemovalMode, SurgeryPlan, SurgeryReport, TensorSurgery};

use crate::linalg::{svd_thin, LinalgError, Matrix, ThinSvd};
use crate::tensorstore::TensorStoreError;

#[derive(Debug, thiserror::Error)]
pub enum SurgeryError {
    #[error("rank {rank} out of range 1..={count}")]
    RankOutOfRange { rank: usize, count: usize },
    #[error("decile must be in 1..=10, got {0}")]
    InvalidDecile(usize),
    #[error("mass fraction must be in [0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("no matching tensors for plan {0}")]
    NoMatch(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Store(#[from] TensorStoreError),
}

/// Boundaries `b_i = floor(i·count/10)`; decile `d` covers ranks
/// `b_{d-1}+1 ..= b_d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecilePartition {
    pub boundaries: [usize; 11],
}

pub fn decile_partition(count: usize) -> DecilePartition {
    let mut boundaries = [0; 11];
    for (i, b) in boundaries.iter_mut().enumerate() {
        *b = i * count / 10;
    }
    DecilePartition { boundaries }
}

impl DecilePartition {
    pub fn count(&self) -> usize {
        self.boundaries[10]
    }

    /// 1-based ranks of decile `d` (1 = largest values).
    pub fn ranks(&self, d: usize) -> Result<Vec<usize>, SurgeryError> {
        if !(1..=10).contains(&d) {
            return Err(SurgeryError::InvalidDecile(d));
        }
        Ok((self.boundaries[d - 1] + 1..=self.boundaries[d]).collect())
    }

    pub fn sizes(&self) -> [usize; 10] {
        let mut s = [0; 10];
        for (d, x) in s.iter_mut().enumerate() {
            *x = self.boundaries[d + 1] - self.boundaries[d];
        }
        s
    }
}

/// Result of zeroing a rank set.
#[derive(Debug, Clone, PartialEq)]
pub struct Removal {
    pub matrix: Matrix,
    /// Sorted 1-based ranks.
    pub removed: Vec<usize>,
    /// Descending singular values of the input.
    pub svals: Vec<f64>,
}

impl Removal {
    /// `Σ ν_r²` over removed ranks.
    pub fn energy(&self) -> f64 {
        self.removed.iter().map(|&r| self.svals[r - 1].powi(2)).sum()
    }

    /// `Σ ν_r` over removed ranks.
    pub fn mass(&self) -> f64 {
        self.removed.iter().map(|&r| self.svals[r - 1]).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.svals.iter().sum()
    }
}

fn rebuild(w: &Matrix, d: &ThinSvd, removed: &[usize]) -> Matrix {
    let k = d.s.len();
    if removed.is_empty() {
        return w.clone();
    }
    if 2 * removed.len() <= k {
        let mut out = w.clone();
        for &r in removed {
            out.add_outer(-d.s[r - 1], &d.u.column(r - 1), &d.v.column(r - 1));
        }
        return out;
    }
    let mut keep = vec![true; k];
    for &r in removed {
        keep[r - 1] = false;
    }
    let mut out = Matrix::zeros(w.rows(), w.cols());
    for (i, _) in keep.iter().enumerate().filter(|(_, &k)| k) {
        out.add_outer(d.s[i], &d.u.column(i), &d.v.column(i));
    }
    out
}

fn normalize_ranks(ranks: &[usize], count: usize) -> Result<Vec<usize>, SurgeryError> {
    let mut r = ranks.to_vec();
    r.sort_unstable();
    r.dedup();
    if let Some(&bad) = r.iter().find(|&&x| x == 0 || x > count) {
        return Err(SurgeryError::RankOutOfRange { rank: bad, count });
    }
    Ok(r)
}

fn remove_with(w: &Matrix, d: &ThinSvd, ranks: &[usize]) -> Result<Removal, SurgeryError> {
    let removed = normalize_ranks(ranks, d.s.len())?;
    Ok(Removal {
        matrix: rebuild(w, d, &removed),
        removed,
        svals: d.s.clone(),
    })
}

/// Zeroes the given 1-based ranks. An empty set returns `w` unchanged.
pub fn remove_ranks(w: &Matrix, ranks: &[usize]) -> Result<Removal, SurgeryError> {
    remove_with(w, &svd_thin(w)?, ranks)
}

/// Zeroes decile `d` of the spectrum.
pub fn remove_decile(w: &Matrix, d: usize) -> Result<Removal, SurgeryError> {
    let ranks = decile_partition(w.rows().min(w.cols())).ranks(d)?;
    remove_ranks(w, &ranks)
}

/// Relative slack on the mass target so that exact decimal budgets such as
/// `0.3·10` are met despite rounding.
const MASS_SLACK: f64 = 1e-12;

/// Ranks chosen by greedy smallest-first removal until the removed mass
/// reaches `fraction·Σν`. Among equal values the higher rank goes first.
pub fn mass_ranks(svals: &[f64], fraction: f64) -> Result<Vec<usize>, SurgeryError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(SurgeryError::InvalidFraction(fraction));
    }
    let total: f64 = svals.iter().sum();
    let target = fraction * total - MASS_SLACK * total;
    let mut removed = Vec::new();
    let mut acc = 0.0;
    let mut order: Vec<usize> = (0..svals.len()).rev().collect();
    // stable sort keeps higher ranks first among ties
    order.sort_by(|&a, &b| svals[a].total_cmp(&svals[b]));
    for i in order {
        if acc >= target {
            break;
        }
        acc += svals[i];
        removed.push(i + 1);
    }
    if fraction == 1.0 {
        removed = (1..=svals.len()).collect();
    }
    removed.sort_unstable();
    Ok(removed)
}

pub fn remove_by_mass(w: &Matrix, fraction: f64) -> Result<Removal, SurgeryError> {
    let d = svd_thin(w)?;
    let ranks = mass_ranks(&d.s, fraction)?;
    remove_with(w, &d, &ranks)
}

pub(crate) fn remove_by_mode(w: &Matrix, mode: &RemovalMode) -> Result<Removal, SurgeryError> {
    let d = svd_thin(w)?;
    let ranks = match mode {
        RemovalMode::Decile(k) => decile_partition(d.s.len()).ranks(*k)?,
        RemovalMode::Mass(f) => mass_ranks(&d.s, *f)?,
        RemovalMode::Ranks(r) => r.clone(),
    };
    remove_with(w, &d, &ranks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, singular_values};

    #[test]
    fn partitions() {
        assert_eq!(decile_partition(100).sizes(), [10; 10]);
        assert_eq!(decile_partition(100).ranks(1).unwrap(), (1..=10).collect::<Vec<_>>());
        assert_eq!(decile_partition(12).sizes(), [1, 1, 1, 1, 2, 1, 1, 1, 1, 2]);
        assert_eq!(decile_partition(5).boundaries, [0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5]);
        assert_eq!(decile_partition(5).sizes(), [0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        for count in 1..60 {
            let p = decile_partition(count);
            let all: Vec<usize> = (1..=10).flat_map(|d| p.ranks(d).unwrap()).collect();
            assert_eq!(all, (1..=count).collect::<Vec<_>>());
        }
        assert!(matches!(decile_partition(10).ranks(0), Err(SurgeryError::InvalidDecile(0))));
        assert!(matches!(decile_partition(10).ranks(11), Err(SurgeryError::InvalidDecile(11))));
    }

    #[test]
    fn diag_example() {
        let w = Matrix::diag(&[3.0, 2.0, 1.0]);
        let r = remove_ranks(&w, &[3]).unwrap();
        assert!(r.matrix.sub(&Matrix::diag(&[3.0, 2.0, 0.0])).max_abs() < 1e-12);
        assert!((r.matrix.sub(&w).frobenius_norm() - 1.0).abs() < 1e-12);
        assert!(matches!(remove_ranks(&w, &[4]), Err(SurgeryError::RankOutOfRange { rank: 4, count: 3 })));
        assert!(matches!(remove_ranks(&w, &[0]), Err(SurgeryError::RankOutOfRange { .. })));
    }

    #[test]
    fn empty_and_full_removal() {
        let w = gaussian_matrix(20, 30, 1.0, 4).unwrap();
        assert_eq!(remove_ranks(&w, &[]).unwrap().matrix, w);
        let all: Vec<usize> = (1..=20).collect();
        assert!(remove_ranks(&w, &all).unwrap().matrix.max_abs() < 1e-12);
        assert_eq!(remove_by_mass(&w, 0.0).unwrap().removed, Vec::<usize>::new());
        let full = remove_by_mass(&w, 1.0).unwrap();
        assert_eq!(full.removed.len(), 20);
        assert!(full.matrix.max_abs() < 1e-12);
    }

    #[test]
    fn mass_greedy_hand_case() {
        assert_eq!(mass_ranks(&[4.0, 3.0, 2.0, 1.0], 0.3).unwrap(), vec![3, 4]);
        assert_eq!(mass_ranks(&[4.0, 3.0, 2.0, 1.0], 0.31).unwrap(), vec![2, 3, 4]);
        assert_eq!(mass_ranks(&[4.0, 3.0, 2.0, 1.0], 0.05).unwrap(), vec![4]);
        // ties: higher rank removed first
        assert_eq!(mass_ranks(&[2.0, 1.0, 1.0], 0.2).unwrap(), vec![3]);
        assert!(matches!(mass_ranks(&[1.0], 1.5), Err(SurgeryError::InvalidFraction(_))));
    }

    #[test]
    fn energy_identity_and_spectrum() {
        for (m, n) in [(64, 64), (48, 96)] {
            let w = gaussian_matrix(m, n, 1.0, (m * n) as u64).unwrap();
            for d in [1, 4, 10] {
                let r = remove_decile(&w, d).unwrap();
                let lhs = r.matrix.sub(&w).frobenius_norm().powi(2);
                assert!((lhs - r.energy()).abs() <= 1e-8 * r.energy(), "{m}x{n} d{d}");
                let mut want = r.svals.clone();
                for &k in &r.removed {
                    want[k - 1] = 0.0;
                }
                want.sort_by(|a, b| b.total_cmp(a));
                let got = singular_values(&r.matrix).unwrap();
                for (a, b) in got.iter().zip(&want) {
                    assert!((a - b).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn disjoint_deciles_add_and_repeat_is_idempotent() {
        let w = gaussian_matrix(40, 50, 1.0, 7).unwrap();
        // ranks are recomputed on each pass, so the bottom decile goes first
        let ten = remove_decile(&w, 10).unwrap().matrix;
        let both_seq = remove_decile(&ten, 1).unwrap().matrix;
        let p = decile_partition(40);
        let mut ranks = p.ranks(1).unwrap();
        ranks.extend(p.ranks(10).unwrap());
        let both = remove_ranks(&w, &ranks).unwrap().matrix;
        assert!(both_seq.sub(&both).max_abs() < 1e-8);
        // zeroed values sort last, so repeating the bottom decile is a no-op
        let once = remove_decile(&w, 10).unwrap().matrix;
        let twice = remove_decile(&once, 10).unwrap().matrix;
        assert!(twice.sub(&once).frobenius_norm() <= 1e-8 * w.frobenius_norm());
        // upper deciles shift down after removal, so a repeat removes new ranks
        let once = remove_decile(&w, 3).unwrap().matrix;
        let twice = remove_decile(&once, 3).unwrap().matrix;
        assert!(twice.sub(&once).frobenius_norm() > 1e-3 * w.frobenius_norm());
    }
}
