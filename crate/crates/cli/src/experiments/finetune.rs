use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use svlens_core::surgery::{apply_plan, BlockScope, RemovalMode, SurgeryPlan};
use svlens_core::tensorstore::{RoleKind, RoleTable, TokenStream};
use svlens_nets::language::SyntheticLanguage;
use svlens_nets::transformer::train_model;
use svlens_nets::{TrainConfig, Transformer};

use super::{block_kinds, score, Score};
use crate::error::{CliError, Result};

pub const FINETUNE_CSV_SCHEMA: &str = "svlens.finetune_order.v1 decile,order,accuracy,perplexity";

/// Fine-tuning on the task-B language, either after or before zeroing one
/// decile in every block matrix. The fine-tuning stream uses `data_seed`, the
/// held-out stream `data_seed + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub train: TrainConfig,
    pub train_tokens: usize,
    pub test_tokens: usize,
    pub data_seed: u64,
    pub deciles: Vec<usize>,
    /// Empty means every block kind present (embeddings and the output head
    /// are never touched).
    pub kinds: Vec<RoleKind>,
    /// A decile counts as destructive when task-B perplexity ends above
    /// `floor_factor` times the no-removal fine-tuned perplexity.
    pub floor_factor: f64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig {
                steps: 400,
                lr: 0.1,
                batch_size: 8,
                seed: 5,
                checkpoint_every: 0,
            },
            train_tokens: 20_000,
            test_tokens: 4000,
            data_seed: 11,
            deciles: (1..=10).collect(),
            kinds: Vec::new(),
            floor_factor: 1.05,
        }
    }
}

impl FinetuneConfig {
    pub fn reseed(&mut self, seed: u64) {
        self.train.seed = seed.wrapping_add(5);
        self.data_seed = seed.wrapping_add(11);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderRow {
    pub decile: usize,
    pub remove_then_finetune: Score,
    pub finetune_then_remove: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinetuneResult {
    /// Pretrained model on task B before any fine-tuning.
    pub pretrained: Score,
    /// Fine-tuned without removal.
    pub finetuned: Score,
    pub floor_perplexity: f64,
    pub kinds: Vec<RoleKind>,
    pub rows: Vec<OrderRow>,
}

impl FinetuneResult {
    pub fn row(&self, decile: usize) -> Option<&OrderRow> {
        self.rows.iter().find(|r| r.decile == decile)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# schema: {FINETUNE_CSV_SCHEMA}\ndecile,order,accuracy,perplexity\n");
        let mut line = |d: String, order: &str, s: &Score| {
            out.push_str(&format!("{d},{order},{:.12e},{:.12e}\n", s.accuracy, s.perplexity));
        };
        line("none".into(), "pretrained", &self.pretrained);
        line("none".into(), "finetuned", &self.finetuned);
        for r in &self.rows {
            line(r.decile.to_string(), "remove_then_finetune", &r.remove_then_finetune);
            line(r.decile.to_string(), "finetune_then_remove", &r.finetune_then_remove);
        }
        out
    }

    pub fn to_json(&self) -> Value {
        json!({
            "primary_metric": "perplexity",
            "pretrained": self.pretrained,
            "finetuned": self.finetuned,
            "floor_perplexity": self.floor_perplexity,
            "kinds": self.kinds,
            "rows": self.rows,
        })
    }
}

fn remove(model: &Transformer, kinds: &[RoleKind], d: usize, table: &RoleTable) -> Result<Transformer> {
    let plan = SurgeryPlan::new(kinds.to_vec(), RemovalMode::Decile(d), BlockScope::All);
    let (map, _) = apply_plan(&model.to_map(), &plan, table)?;
    Ok(Transformer::from_map(&model.config, &map)?)
}

fn finetune(model: Transformer, tokens: &TokenStream, train: &TrainConfig, step: String) -> Result<Transformer> {
    Ok(train_model(model, tokens, train)
        .map_err(|e| CliError::from(e).in_step(step))?
        .model)
}

/// Both orders for every configured decile. Remove-then-finetune runs are
/// independent and execute in parallel.
pub fn finetune_order(pretrained: &Transformer, cfg: &FinetuneConfig, table: &RoleTable) -> Result<FinetuneResult> {
    let lang = SyntheticLanguage::task_b(pretrained.config.vocab);
    let train = lang.generate(cfg.train_tokens, cfg.data_seed)?;
    let test = lang.generate(cfg.test_tokens, cfg.data_seed.wrapping_add(1))?;
    let kinds = if cfg.kinds.is_empty() {
        block_kinds(&pretrained.to_map(), table)
    } else {
        cfg.kinds.clone()
    };
    let tuned = finetune(pretrained.clone(), &train, &cfg.train, "fine-tuning".into())?;
    let finetuned = score(&tuned, &test)?;
    let rows = cfg
        .deciles
        .par_iter()
        .map(|&d| -> Result<OrderRow> {
            let before = remove(pretrained, &kinds, d, table)?;
            let a = finetune(before, &train, &cfg.train, format!("fine-tuning after removing decile {d}"))?;
            let b = remove(&tuned, &kinds, d, table)?;
            Ok(OrderRow {
                decile: d,
                remove_then_finetune: score(&a, &test)?,
                finetune_then_remove: score(&b, &test)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FinetuneResult {
        pretrained: score(pretrained, &test)?,
        finetuned,
        floor_perplexity: cfg.floor_factor * finetuned.perplexity,
        kinds,
        rows,
    })
}
