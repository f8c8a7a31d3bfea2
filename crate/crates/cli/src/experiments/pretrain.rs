use serde::{Deserialize, Serialize};
use svlens_core::tensorstore::TokenStream;
use svlens_nets::language::SyntheticLanguage;
use svlens_nets::{transformer_train, TrainConfig, TrainRun, TransformerConfig};

use crate::error::{CliError, Result};

/// Toy next-token model on the task-A language. The training stream uses
/// `data_seed`, the held-out stream `data_seed + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub model: TransformerConfig,
    pub train: TrainConfig,
    pub train_tokens: usize,
    pub test_tokens: usize,
    pub data_seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            model: TransformerConfig::default(),
            train: TrainConfig {
                steps: 8000,
                lr: 1.0,
                batch_size: 8,
                seed: 0,
                checkpoint_every: 0,
            },
            train_tokens: 20_000,
            test_tokens: 4000,
            data_seed: 1,
        }
    }
}

impl PretrainConfig {
    /// Derives every seed from one base value.
    pub fn reseed(&mut self, seed: u64) {
        self.model.seed = seed;
        self.train.seed = seed;
        self.data_seed = seed.wrapping_add(1);
    }

    pub fn language(&self) -> SyntheticLanguage {
        SyntheticLanguage::task_a(self.model.vocab)
    }

    pub fn train_stream(&self) -> Result<TokenStream> {
        Ok(self.language().generate(self.train_tokens, self.data_seed)?)
    }

    pub fn test_stream(&self) -> Result<TokenStream> {
        Ok(self.language().generate(self.test_tokens, self.data_seed.wrapping_add(1))?)
    }
}

pub fn pretrain(cfg: &PretrainConfig) -> Result<TrainRun> {
    let tokens = cfg.train_stream()?;
    transformer_train(&cfg.model, &tokens, &cfg.train).map_err(|e| CliError::from(e).in_step("pretraining"))
}
