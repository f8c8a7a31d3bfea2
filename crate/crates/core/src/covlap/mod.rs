//! Streaming activation covariance and overlap profiles between right
//! singular vectors of a weight matrix and eigenvectors of its input
//! covariance.

mod accumulator;
mod overlap;

pub use accumulator::CovAccumulator;
pub use overlap::{
    activations_for, overlap_for_matrix, overlap_profile, overlap_timeline, timeline_csv, OverlapProfile, TimelinePoint,
    OVERLAP_CSV_SCHEMA, OVERLAP_FLAG, TIMELINE_CSV_SCHEMA,
};

use crate::linalg::LinalgError;
use crate::tensorstore::TensorStoreError;

#[derive(Debug, thiserror::Error)]
pub enum CovError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("covariance needs at least 2 samples, have {0}")]
    TooFewSamples(u64),
    #[error("activations contain non-finite values")]
    NonFinite,
    #[error("{which} vectors are not orthonormal (defect {defect:e})")]
    NotOrthonormal { which: &'static str, defect: f64 },
    #[error("no matrix with role {0} in checkpoint {1}")]
    MissingMatrix(String, usize),
    #[error("no activations for layer {layer:?} in dump {index}")]
    MissingActivations { layer: String, index: usize },
    #[error("{checkpoints} checkpoints but {dumps} activation dumps")]
    CountMismatch { checkpoints: usize, dumps: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Store(#[from] TensorStoreError),
}
