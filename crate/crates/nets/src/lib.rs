//! Desk-scale models: an MLP classifier with an α-scaled softmax, and a small
//! pre-norm decoder-only transformer. Both train by exact backpropagation
//! with plain mini-batch gradient descent and save container checkpoints
//! whose tensor names classify into matrix roles.

pub mod data;
pub mod language;
pub mod mlp;
pub mod transformer;

use serde::Serialize;
use svlens_core::tensorstore::TensorStoreError;

pub use data::LabeledData;
pub use mlp::{mlp_eval, mlp_train, Mlp, MlpConfig, MlpRun};
pub use transformer::{
    dump_activations, next_token_accuracy, perplexity, transformer_forward, transformer_train, FfnKind, Selector,
    Transformer, TransformerConfig, TrainConfig, TrainRun,
};

#[derive(Debug, thiserror::Error)]
pub enum NetsError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("missing tensor {0:?} for the declared architecture")]
    MissingTensor(String),
    #[error("sequence of length {len} exceeds context {context}")]
    ContextOverflow { len: usize, context: usize },
    #[error("token {token} out of range for vocab {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("loss diverged ({loss}) at {stage} {index}")]
    Divergence { stage: &'static str, index: usize, loss: f64 },
    #[error("invalid selector {0:?}")]
    InvalidSelector(String),
    #[error(transparent)]
    Store(#[from] TensorStoreError),
}

pub type Result<T> = std::result::Result<T, NetsError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Perplexity(f64),
    Accuracy(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalResult {
    pub metric: Metric,
    pub n_items: usize,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Perplexity(_) => "perplexity",
            Metric::Accuracy(_) => "accuracy",
        }
    }
}

impl EvalResult {
    pub fn value(&self) -> f64 {
        match self.metric {
            Metric::Perplexity(v) | Metric::Accuracy(v) => v,
        }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable `log softmax(xs)[k]`.
pub(crate) fn log_softmax_at(xs: &[f64], k: usize) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    xs[k] - lse
}

/// In-place softmax of a row.
pub(crate) fn softmax_in_place(xs: &mut [f64]) {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - m).exp();
        z += *x;
    }
    for x in xs.iter_mut() {
        *x /= z;
    }
}
