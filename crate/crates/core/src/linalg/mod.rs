//! Dense numerical kernels in binary64.

mod eigh;
mod matrix;
mod random;
mod svd;

pub use eigh::{eigh, EigResult};
pub use matrix::{dot, norm2, Matrix};
pub use random::{gaussian_matrix, random_orthogonal, random_unit_vector, GaussianRng};
pub use svd::{singular_values, svd, svd_thin, SvdResult, ThinSvd};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix has no entries")]
    Empty,
    #[error("matrix contains NaN or infinite entries")]
    NonFinite,
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max |A - A^T| = {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
}
