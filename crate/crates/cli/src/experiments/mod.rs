//! Desk-scale ablation experiments shared by the `ablate` subcommands and
//! the acceptance suite.

mod finetune;
mod lazy;
mod pretrain;
mod sweep;

pub use finetune::{finetune_order, FinetuneConfig, FinetuneResult, OrderRow, FINETUNE_CSV_SCHEMA};
pub use lazy::{lazy_experiment, remove_smallest_fraction, FrozenConfig, FrozenRow, LazyConfig, LazyCurve, LazyResult, LAZY_CSV_SCHEMA};
pub use pretrain::{pretrain, PretrainConfig};
pub use sweep::{decile_sweep, mlp_decile_sweep, SweepResult, SweepRow, SWEEP_CSV_SCHEMA};

use serde::Serialize;
use svlens_core::tensorstore::{RoleKind, RoleTable, TensorMap, TokenStream};
use svlens_nets::{next_token_accuracy, perplexity, Transformer};

use crate::error::Result;

/// Task metrics of a language model on one token stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    pub accuracy: f64,
    pub perplexity: f64,
}

pub fn score(model: &Transformer, tokens: &TokenStream) -> Result<Score> {
    Ok(Score {
        accuracy: next_token_accuracy(model, tokens)?.value(),
        perplexity: perplexity(model, tokens)?.value(),
    })
}

/// Role kinds (other than `Other`) that occur among the matrices of `map`,
/// in enum order.
pub fn present_kinds(map: &TensorMap, table: &RoleTable) -> Vec<RoleKind> {
    let mut kinds: Vec<RoleKind> = map
        .matrices_with_roles(table)
        .map(|(_, _, r)| r.kind)
        .filter(|k| *k != RoleKind::Other)
        .collect();
    kinds.sort();
    kinds.dedup();
    kinds
}

/// Kinds that live inside transformer blocks (all but embeddings and `Other`).
pub fn block_kinds(map: &TensorMap, table: &RoleTable) -> Vec<RoleKind> {
    present_kinds(map, table)
        .into_iter()
        .filter(|k| *k != RoleKind::Embedding)
        .collect()
}
