//! Pre-norm decoder-only transformer.
//!
//! Each block computes `x + Att(LN₁(x))` then `x + FFN(LN₂(x))` with causal
//! multi-head attention `softmax(Q Kᵀ/√d_k) V` projected by `W_O`. The
//! feed-forward is `W_D·GELU(W_U x + b_U)` or, for the gated variant,
//! `W_D·(GELU(W_U x + b_U) ⊙ (W_G x + b_G))`. Learned absolute positions are
//! added to token embeddings; a final layer norm feeds the output projection.
//! GELU is the tanh approximation.
//!
//! Tensor names:
//!
//! ```text
//! embed.tokens.weight            [vocab, d_model]
//! embed.positions.weight         [context, d_model]
//! blocks.{b}.ln1.weight|bias     [d_model]
//! blocks.{b}.attn.{q,k,v,o}_proj.weight   [d_model, d_model]
//! blocks.{b}.ln2.weight|bias     [d_model]
//! blocks.{b}.mlp.up_proj.weight  [d_ff, d_model]   (+ .bias [d_ff])
//! blocks.{b}.mlp.gate_proj.weight [d_ff, d_model]  (+ .bias, gated only)
//! blocks.{b}.mlp.down_proj.weight [d_model, d_ff]
//! final_ln.weight|bias           [d_model]
//! lm_head.weight                 [vocab, d_model]
//! ```

mod dump;
mod eval;
mod forward;
mod train;

pub use dump::{dump_activations, dump_activations_to_map, Selector};
pub use eval::{next_token_accuracy, perplexity, scored_windows, window_nll};
pub use forward::{transformer_forward, window_gradients, window_loss};
pub use train::{train_model, transformer_train, TrainConfig, TrainRun};

use serde::{Deserialize, Serialize};
use svlens_core::linalg::{GaussianRng, Matrix};
use svlens_core::tensorstore::{DType, DenseTensor, TensorData, TensorMap};

use crate::{NetsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FfnKind {
    #[default]
    Plain,
    Glu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformerConfig {
    pub vocab: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    pub d_ff: usize,
    pub ffn_kind: FfnKind,
    pub context: usize,
    pub seed: u64,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self {
            vocab: 16,
            d_model: 32,
            n_heads: 4,
            n_blocks: 2,
            d_ff: 64,
            ffn_kind: FfnKind::Plain,
            context: 32,
            seed: 0,
        }
    }
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.vocab, self.d_model, self.n_heads, self.n_blocks, self.d_ff, self.context];
        if positive.contains(&0) {
            return Err(NetsError::InvalidConfig("all transformer sizes must be positive".into()));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(NetsError::InvalidConfig(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn d_k(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub ln1_g: Vec<f64>,
    pub ln1_b: Vec<f64>,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub ln2_g: Vec<f64>,
    pub ln2_b: Vec<f64>,
    pub w_up: Matrix,
    pub b_up: Vec<f64>,
    pub w_gate: Option<Matrix>,
    pub b_gate: Option<Vec<f64>>,
    pub w_down: Matrix,
}

/// Parameters of the model. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformer {
    pub config: TransformerConfig,
    pub tok_emb: Matrix,
    pub pos_emb: Matrix,
    pub blocks: Vec<Block>,
    pub lnf_g: Vec<f64>,
    pub lnf_b: Vec<f64>,
    pub lm_head: Matrix,
}

fn gauss(rng: &mut GaussianRng, rows: usize, cols: usize, sd: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| sd * rng.standard_normal())
}

impl Transformer {
    /// Gaussian init: linear maps `N(0, 1/fan_in)`, embeddings `N(0, 1)`,
    /// layer-norm gains 1, biases 0.
    pub fn init(config: &TransformerConfig) -> Result<Self> {
        config.validate()?;
        let c = config;
        let mut rng = GaussianRng::new(c.seed);
        let d = c.d_model;
        let sd_d = 1.0 / (d as f64).sqrt();
        let sd_ff = 1.0 / (c.d_ff as f64).sqrt();
        let tok_emb = gauss(&mut rng, c.vocab, d, 1.0);
        let pos_emb = gauss(&mut rng, c.context, d, 1.0);
        let mut blocks = Vec::with_capacity(c.n_blocks);
        for _ in 0..c.n_blocks {
            let wq = gauss(&mut rng, d, d, sd_d);
            let wk = gauss(&mut rng, d, d, sd_d);
            let wv = gauss(&mut rng, d, d, sd_d);
            let wo = gauss(&mut rng, d, d, sd_d);
            let w_up = gauss(&mut rng, c.d_ff, d, sd_d);
            let w_gate = (c.ffn_kind == FfnKind::Glu).then(|| gauss(&mut rng, c.d_ff, d, sd_d));
            let w_down = gauss(&mut rng, d, c.d_ff, sd_ff);
            blocks.push(Block {
                ln1_g: vec![1.0; d],
                ln1_b: vec![0.0; d],
                wq,
                wk,
                wv,
                wo,
                ln2_g: vec![1.0; d],
                ln2_b: vec![0.0; d],
                w_up,
                b_up: vec![0.0; c.d_ff],
                b_gate: w_gate.as_ref().map(|_| vec![0.0; c.d_ff]),
                w_gate,
                w_down,
            });
        }
        let lm_head = gauss(&mut rng, c.vocab, d, sd_d);
        Ok(Self {
            config: c.clone(),
            tok_emb,
            pos_emb,
            blocks,
            lnf_g: vec![1.0; d],
            lnf_b: vec![0.0; d],
            lm_head,
        })
    }

    /// Same architecture with every parameter zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, _, p) in z.params_mut() {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    /// `(name, shape, values)` for every parameter in a fixed order.
    pub fn params(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mat = |m: &Matrix| vec![m.rows(), m.cols()];
        let mut out: Vec<(String, Vec<usize>, &[f64])> = vec![
            ("embed.tokens.weight".into(), mat(&self.tok_emb), self.tok_emb.as_slice()),
            ("embed.positions.weight".into(), mat(&self.pos_emb), self.pos_emb.as_slice()),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("blocks.{i}");
            out.push((format!("{p}.ln1.weight"), vec![b.ln1_g.len()], &b.ln1_g));
            out.push((format!("{p}.ln1.bias"), vec![b.ln1_b.len()], &b.ln1_b));
            out.push((format!("{p}.attn.q_proj.weight"), mat(&b.wq), b.wq.as_slice()));
            out.push((format!("{p}.attn.k_proj.weight"), mat(&b.wk), b.wk.as_slice()));
            out.push((format!("{p}.attn.v_proj.weight"), mat(&b.wv), b.wv.as_slice()));
            out.push((format!("{p}.attn.o_proj.weight"), mat(&b.wo), b.wo.as_slice()));
            out.push((format!("{p}.ln2.weight"), vec![b.ln2_g.len()], &b.ln2_g));
            out.push((format!("{p}.ln2.bias"), vec![b.ln2_b.len()], &b.ln2_b));
            out.push((format!("{p}.mlp.up_proj.weight"), mat(&b.w_up), b.w_up.as_slice()));
            out.push((format!("{p}.mlp.up_proj.bias"), vec![b.b_up.len()], &b.b_up));
            if let (Some(g), Some(bg)) = (&b.w_gate, &b.b_gate) {
                out.push((format!("{p}.mlp.gate_proj.weight"), mat(g), g.as_slice()));
                out.push((format!("{p}.mlp.gate_proj.bias"), vec![bg.len()], bg));
            }
            out.push((format!("{p}.mlp.down_proj.weight"), mat(&b.w_down), b.w_down.as_slice()));
        }
        out.push(("final_ln.weight".into(), vec![self.lnf_g.len()], &self.lnf_g));
        out.push(("final_ln.bias".into(), vec![self.lnf_b.len()], &self.lnf_b));
        out.push(("lm_head.weight".into(), mat(&self.lm_head), self.lm_head.as_slice()));
        out
    }

    /// Mutable view in the same order as [`Transformer::params`].
    pub fn params_mut(&mut self) -> Vec<(String, Vec<usize>, &mut [f64])> {
        let mat = |m: &Matrix| vec![m.rows(), m.cols()];
        let mut out: Vec<(String, Vec<usize>, &mut [f64])> = Vec::new();
        let s = mat(&self.tok_emb);
        out.push(("embed.tokens.weight".into(), s, self.tok_emb.as_mut_slice()));
        let s = mat(&self.pos_emb);
        out.push(("embed.positions.weight".into(), s, self.pos_emb.as_mut_slice()));
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let p = format!("blocks.{i}");
            let d = b.ln1_g.len();
            out.push((format!("{p}.ln1.weight"), vec![d], &mut b.ln1_g));
            out.push((format!("{p}.ln1.bias"), vec![d], &mut b.ln1_b));
            let s = mat(&b.wq);
            out.push((format!("{p}.attn.q_proj.weight"), s.clone(), b.wq.as_mut_slice()));
            out.push((format!("{p}.attn.k_proj.weight"), s.clone(), b.wk.as_mut_slice()));
            out.push((format!("{p}.attn.v_proj.weight"), s.clone(), b.wv.as_mut_slice()));
            out.push((format!("{p}.attn.o_proj.weight"), s, b.wo.as_mut_slice()));
            out.push((format!("{p}.ln2.weight"), vec![d], &mut b.ln2_g));
            out.push((format!("{p}.ln2.bias"), vec![d], &mut b.ln2_b));
            let s = mat(&b.w_up);
            let ff = b.b_up.len();
            out.push((format!("{p}.mlp.up_proj.weight"), s.clone(), b.w_up.as_mut_slice()));
            out.push((format!("{p}.mlp.up_proj.bias"), vec![ff], &mut b.b_up));
            if let (Some(g), Some(bg)) = (b.w_gate.as_mut(), b.b_gate.as_mut()) {
                out.push((format!("{p}.mlp.gate_proj.weight"), s, g.as_mut_slice()));
                out.push((format!("{p}.mlp.gate_proj.bias"), vec![ff], bg));
            }
            let s = mat(&b.w_down);
            out.push((format!("{p}.mlp.down_proj.weight"), s, b.w_down.as_mut_slice()));
        }
        let d = self.lnf_g.len();
        out.push(("final_ln.weight".into(), vec![d], &mut self.lnf_g));
        out.push(("final_ln.bias".into(), vec![d], &mut self.lnf_b));
        let s = mat(&self.lm_head);
        out.push(("lm_head.weight".into(), s, self.lm_head.as_mut_slice()));
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|(_, _, p)| p.len()).sum()
    }

    /// Binary64 container with the config under the `config` metadata key.
    pub fn to_map(&self) -> TensorMap {
        self.to_map_as(DType::F64)
    }

    /// Config recorded by [`Transformer::to_map`], if present.
    pub fn config_from_map(map: &TensorMap) -> Result<TransformerConfig> {
        let text = map
            .metadata_value("config")
            .ok_or_else(|| NetsError::InvalidConfig("checkpoint has no config metadata".into()))?;
        serde_json::from_str(text).map_err(|e| NetsError::InvalidConfig(e.to_string()))
    }

    /// Loads every tensor the declared architecture needs; shapes must match.
    pub fn from_map(config: &TransformerConfig, map: &TensorMap) -> Result<Self> {
        let mut model = Self::init(config)?;
        for (name, shape, dst) in model.params_mut() {
            let t = map.get(&name).ok_or_else(|| NetsError::MissingTensor(name.clone()))?;
            if t.shape() != shape.as_slice() {
                return Err(NetsError::Shape(format!("{name}: {:?} vs expected {shape:?}", t.shape())));
            }
            dst.copy_from_slice(&t.to_f64_vec());
        }
        Ok(model)
    }

    /// Container with parameters stored in `dtype`.
    pub fn to_map_as(&self, dtype: DType) -> TensorMap {
        let mut map = TensorMap::new();
        for (name, shape, data) in self.params() {
            let data = match dtype {
                DType::F64 => TensorData::F64(data.to_vec()),
                DType::F32 => TensorData::F32(data.iter().map(|&v| v as f32).collect()),
            };
            map.insert(name, DenseTensor::new(shape, data).expect("shape matches")).expect("unique names");
        }
        map.set_metadata("config", serde_json::to_string(&self.config).expect("config serializes"));
        map
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use svlens_core::tensorstore::{classify_role, RoleKind};

    #[test]
    fn names_classify_into_roles() {
        let cfg = TransformerConfig {
            ffn_kind: FfnKind::Glu,
            ..TransformerConfig::default()
        };
        let m = Transformer::init(&cfg).unwrap();
        let map = m.to_map();
        let mut kinds: Vec<RoleKind> = map
            .iter()
            .filter(|(_, t)| t.is_matrix())
            .map(|(n, _)| classify_role(n).kind)
            .collect();
        kinds.sort();
        kinds.dedup();
        use RoleKind::*;
        assert_eq!(kinds, vec![Query, Key, Value, AttnOutput, Up, Down, Gate, Embedding, Other]);
        assert_eq!(classify_role("blocks.1.attn.v_proj.weight").block, Some(1));
        assert_eq!(Transformer::from_map(&cfg, &map).unwrap(), m);
        assert_eq!(Transformer::config_from_map(&map).unwrap(), cfg);
    }

    #[test]
    fn missing_tensor_is_reported() {
        let cfg = TransformerConfig::default();
        let mut map = Transformer::init(&cfg).unwrap().to_map();
        map.remove("blocks.1.attn.k_proj.weight");
        let err = Transformer::from_map(&cfg, &map).unwrap_err();
        assert!(matches!(err, NetsError::MissingTensor(ref n) if n == "blocks.1.attn.k_proj.weight"));
        let bad = TransformerConfig { n_heads: 5, ..cfg };
        assert!(Transformer::init(&bad).is_err());
    }
}
