use serde::{Deserialize, Serialize};
use serde_json::json;
use svlens_core::tensorstore::TokenStream;
use svlens_nets::data::{ClusterSpec, LabeledData};
use svlens_nets::{mlp_train, transformer_train, MlpConfig};

use super::Ctx;
use crate::error::{CliError, Result};
use crate::experiments::{score, PretrainConfig};
use crate::{TrainLmArgs, TrainMlpArgs};

/// MLP classifier on Gaussian clusters. Training samples use `data_seed`,
/// test samples `data_seed + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainMlpConfig {
    pub mlp: MlpConfig,
    pub data: ClusterSpec,
    pub train_size: usize,
    pub test_size: usize,
    pub data_seed: u64,
}

impl Default for TrainMlpConfig {
    fn default() -> Self {
        Self {
            mlp: MlpConfig::default(),
            data: ClusterSpec::default(),
            train_size: 2000,
            test_size: 1000,
            data_seed: 1,
        }
    }
}

fn losses_csv(schema: &str, unit: &str, losses: &[f64]) -> String {
    let mut out = format!("# schema: {schema} {unit},loss\n{unit},loss\n");
    for (i, l) in losses.iter().enumerate() {
        out.push_str(&format!("{},{l:.12e}\n", i + 1));
    }
    out
}

pub fn mlp(ctx: &mut Ctx, args: &TrainMlpArgs) -> Result<()> {
    let mut cfg: TrainMlpConfig = ctx.config()?;
    if let Some(s) = ctx.cli.seed {
        cfg.mlp.seed = s;
        cfg.data.means_seed = s;
        cfg.data_seed = s.wrapping_add(1);
    }
    let (train, test): (LabeledData, LabeledData) = match &args.data {
        Some(path) => {
            let train = ctx.labeled(path)?;
            let test = match &args.test {
                Some(p) => ctx.labeled(p)?,
                None => train.clone(),
            };
            (train, test)
        }
        None => {
            if args.test.is_some() {
                return Err(CliError::Usage("--test needs --data".into()));
            }
            ctx.log.seed("means", cfg.data.means_seed);
            ctx.log.seed("data", cfg.data_seed);
            (cfg.data.sample(cfg.train_size, cfg.data_seed)?, cfg.data.sample(cfg.test_size, cfg.data_seed.wrapping_add(1))?)
        }
    };
    ctx.log.seed("mlp", cfg.mlp.seed);
    ctx.record_config(&cfg)?;
    let run = mlp_train(&cfg.mlp, &train).map_err(|e| CliError::from(e).in_step("train-mlp"))?;
    for (i, c) in run.checkpoints.iter().enumerate() {
        let epoch = c.step().unwrap_or(i as u64);
        ctx.out.checkpoint(&format!("checkpoints/epoch_{epoch:04}.safetensors"), c)?;
    }
    ctx.out.checkpoint("initial.safetensors", &run.initial.to_map())?;
    ctx.out.checkpoint("model.safetensors", &run.model.to_map())?;
    ctx.out.csv("losses.csv", &losses_csv("svlens.losses.v1", "epoch", &run.losses))?;
    ctx.out.json(
        "summary.json",
        &json!({
            "alpha": cfg.mlp.alpha,
            "train_accuracy": run.model.accuracy(&train)?,
            "test_accuracy": run.model.accuracy(&test)?,
            "relative_movement": run.model.relative_movement(&run.initial),
            "final_loss": run.losses.last(),
        }),
    )?;
    Ok(())
}

pub fn lm(ctx: &mut Ctx, args: &TrainLmArgs) -> Result<()> {
    let mut cfg: PretrainConfig = ctx.config()?;
    if let Some(s) = ctx.cli.seed {
        cfg.reseed(s);
    }
    let (train, test): (TokenStream, TokenStream) = match &args.tokens {
        Some(path) => {
            let train = ctx.tokens(path)?;
            cfg.model.vocab = train.vocab_size() as usize;
            let test = match &args.test_tokens {
                Some(p) => ctx.tokens(p)?,
                None => train.clone(),
            };
            (train, test)
        }
        None => {
            if args.test_tokens.is_some() {
                return Err(CliError::Usage("--test-tokens needs --tokens".into()));
            }
            ctx.log.seed("data", cfg.data_seed);
            (cfg.train_stream()?, cfg.test_stream()?)
        }
    };
    ctx.log.seed("model", cfg.model.seed);
    ctx.log.seed("train", cfg.train.seed);
    ctx.record_config(&cfg)?;
    let run = transformer_train(&cfg.model, &train, &cfg.train).map_err(|e| CliError::from(e).in_step("train-lm"))?;
    for (i, c) in run.checkpoints.iter().enumerate() {
        let step = c.step().unwrap_or(i as u64);
        ctx.out.checkpoint(&format!("checkpoints/step_{step:06}.safetensors"), c)?;
    }
    ctx.out.checkpoint("model.safetensors", &run.model.to_map())?;
    ctx.out.csv("losses.csv", &losses_csv("svlens.losses.v1", "step", &run.losses))?;
    let s = score(&run.model, &test)?;
    ctx.out.json(
        "summary.json",
        &json!({
            "test_perplexity": s.perplexity,
            "test_accuracy": s.accuracy,
            "final_loss": run.losses.last(),
            "steps": cfg.train.steps,
        }),
    )?;
    Ok(())
}
