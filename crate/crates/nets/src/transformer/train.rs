use serde::{Deserialize, Serialize};
use svlens_core::linalg::GaussianRng;
use svlens_core::tensorstore::{TensorMap, TokenStream};

use super::{window_gradients, Transformer, TransformerConfig};
use crate::{NetsError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    /// Windows per step.
    pub batch_size: usize,
    pub seed: u64,
    /// Checkpoint cadence in steps; 0 saves only the initial and final state.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            lr: 0.1,
            batch_size: 8,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    /// States at steps `0, k, 2k, …` plus the final step; `step` metadata
    /// holds the step.
    pub checkpoints: Vec<TensorMap>,
    /// Mean batch loss per step.
    pub losses: Vec<f64>,
    pub model: Transformer,
}

/// Mini-batch gradient descent on next-token cross-entropy over random
/// windows of `context + 1` tokens (the whole stream when shorter).
pub fn train_model(mut model: Transformer, tokens: &TokenStream, train: &TrainConfig) -> Result<TrainRun> {
    if train.steps == 0 || train.batch_size == 0 {
        return Err(NetsError::InvalidConfig("steps and batch_size must be positive".into()));
    }
    let ids = tokens.tokens();
    if ids.len() < 2 {
        return Err(NetsError::Empty("need at least 2 tokens to train".into()));
    }
    let window = model.config.context.min(ids.len() - 1);
    let starts = ids.len() - window;
    let mut rng = GaussianRng::new(train.seed);
    let snapshot = |m: &Transformer, step: usize| {
        let mut map = m.to_map();
        map.set_metadata("step", step.to_string());
        map
    };
    let mut checkpoints = vec![snapshot(&model, 0)];
    let mut losses = Vec::with_capacity(train.steps);
    let mut grads = model.zeros_like();
    let weight = 1.0 / train.batch_size as f64;
    for step in 1..=train.steps {
        for (_, _, g) in grads.params_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut loss = 0.0;
        for _ in 0..train.batch_size {
            let s = rng.below(starts);
            loss += weight * window_gradients(&model, &ids[s..s + window], &ids[s + 1..s + window + 1], weight, &mut grads)?;
        }
        if !loss.is_finite() {
            return Err(NetsError::Divergence { stage: "step", index: step, loss });
        }
        losses.push(loss);
        for ((_, _, p), (_, _, g)) in model.params_mut().into_iter().zip(grads.params()) {
            for (a, b) in p.iter_mut().zip(g) {
                *a -= train.lr * b;
            }
        }
        let cadence = train.checkpoint_every > 0 && step % train.checkpoint_every == 0;
        if cadence || step == train.steps {
            checkpoints.push(snapshot(&model, step));
        }
    }
    Ok(TrainRun {
        checkpoints,
        losses,
        model,
    })
}

/// Initializes from `config` and trains.
pub fn transformer_train(config: &TransformerConfig, tokens: &TokenStream, train: &TrainConfig) -> Result<TrainRun> {
    if let Some(&t) = tokens.tokens().iter().find(|&&t| t as usize >= config.vocab) {
        return Err(NetsError::TokenOutOfRange { token: t, vocab: config.vocab });
    }
    train_model(Transformer::init(config)?, tokens, train)
}
