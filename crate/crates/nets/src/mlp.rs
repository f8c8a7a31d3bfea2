//! Fully connected classifier with ReLU hidden layers and an α-scaled final
//! softmax, `a_L = softmax(α(W_L a + b_L))`, trained on
//! `l = −(1/(N α²)) Σ y·ln a_L`. With α = 1 this is ordinary cross-entropy.
//!
//! Tensors: `layers.{i}.weight` `[out, in]` and `layers.{i}.bias` `[out]`;
//! α is stored in the `alpha` metadata entry.

use serde::{Deserialize, Serialize};
use svlens_core::linalg::{GaussianRng, Matrix};
use svlens_core::tensorstore::{DType, DenseTensor, TensorMap};

use crate::data::LabeledData;
use crate::{argmax, log_softmax_at, softmax_in_place, EvalResult, Metric, NetsError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub layer_dims: Vec<usize>,
    pub alpha: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub freeze_layers: Vec<usize>,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            layer_dims: vec![64, 64, 64, 64, 10],
            alpha: 1.0,
            lr: 0.05,
            epochs: 20,
            batch_size: 32,
            seed: 0,
            freeze_layers: Vec::new(),
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 || self.layer_dims.contains(&0) {
            return Err(NetsError::InvalidConfig("layer_dims needs at least two positive sizes".into()));
        }
        if !(self.alpha >= 1.0) {
            return Err(NetsError::InvalidConfig(format!("alpha must be >= 1, got {}", self.alpha)));
        }
        if self.batch_size == 0 {
            return Err(NetsError::InvalidConfig("batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub alpha: f64,
}

/// Per-layer gradients, same layout as [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Mlp {
    /// He-normal weights (`σ² = 2/fan_in`), zero biases.
    pub fn init(dims: &[usize], alpha: f64, seed: u64) -> Self {
        let mut rng = GaussianRng::new(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in dims.windows(2) {
            let sd = (2.0 / w[0] as f64).sqrt();
            weights.push(Matrix::from_fn(w[1], w[0], |_, _| sd * rng.standard_normal()));
            biases.push(vec![0.0; w[1]]);
        }
        Self { weights, biases, alpha }
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().expect("non-empty").rows()
    }

    pub fn weight_name(i: usize) -> String {
        format!("layers.{i}.weight")
    }

    pub fn bias_name(i: usize) -> String {
        format!("layers.{i}.bias")
    }

    pub fn to_map(&self) -> TensorMap {
        let mut map = TensorMap::new();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            map.insert(Self::weight_name(i), DenseTensor::from_matrix(w, DType::F64)).expect("unique");
            map.insert(Self::bias_name(i), DenseTensor::from_f64(vec![b.len()], b.clone()).expect("len"))
                .expect("unique");
        }
        map.set_metadata("alpha", format!("{}", self.alpha));
        map
    }

    pub fn from_map(map: &TensorMap) -> Result<Self> {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for i in 0.. {
            let Some(w) = map.matrix(&Self::weight_name(i)) else { break };
            let b = map
                .get(&Self::bias_name(i))
                .ok_or_else(|| NetsError::MissingTensor(Self::bias_name(i)))?
                .to_f64_vec();
            if b.len() != w.rows() {
                return Err(NetsError::Shape(format!("layer {i}: bias {} vs {} outputs", b.len(), w.rows())));
            }
            if let Some(prev) = weights.last() {
                let prev: &Matrix = prev;
                if prev.rows() != w.cols() {
                    return Err(NetsError::Shape(format!("layer {i} input {} vs {}", w.cols(), prev.rows())));
                }
            }
            weights.push(w);
            biases.push(b);
        }
        if weights.is_empty() {
            return Err(NetsError::MissingTensor(Self::weight_name(0)));
        }
        let alpha = match map.metadata_value("alpha") {
            Some(s) => s.parse().map_err(|_| NetsError::InvalidConfig(format!("bad alpha {s:?}")))?,
            None => 1.0,
        };
        Ok(Self { weights, biases, alpha })
    }

    fn affine(&self, l: usize, a: &Matrix) -> Matrix {
        let mut z = a.matmul_nt(&self.weights[l]);
        let b = &self.biases[l];
        for i in 0..z.rows() {
            for (v, bb) in z.row_mut(i).iter_mut().zip(b) {
                *v += bb;
            }
        }
        z
    }

    /// Activations `[a_0 = x, a_1, …, a_{L-1}]` and final pre-softmax `z_L`
    /// (without α).
    fn forward_cache(&self, x: &Matrix) -> (Vec<Matrix>, Matrix) {
        let mut acts = vec![x.clone()];
        let last = self.num_layers() - 1;
        for l in 0..last {
            let mut z = self.affine(l, acts.last().expect("non-empty"));
            z.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
            acts.push(z);
        }
        let z = self.affine(last, acts.last().expect("non-empty"));
        (acts, z)
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(NetsError::Shape(format!("input dim {} vs {}", x.cols(), self.input_dim())));
        }
        Ok(())
    }

    /// Softmax inputs `α(W_L a + b_L)`, `[N, classes]`.
    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        Ok(self.forward_cache(x).1.scale(self.alpha))
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let z = self.logits(x)?;
        Ok((0..z.rows()).map(|i| argmax(z.row(i))).collect())
    }

    fn check_labels(&self, y: &[usize]) -> Result<()> {
        if let Some(&bad) = y.iter().find(|&&c| c >= self.output_dim()) {
            return Err(NetsError::Shape(format!("label {bad} >= output dim {}", self.output_dim())));
        }
        Ok(())
    }

    /// `−(1/(N α²)) Σ ln softmax(α z)_y`.
    pub fn loss(&self, data: &LabeledData) -> Result<f64> {
        self.check_labels(&data.y)?;
        let z = self.logits(&data.x)?;
        let n = data.len() as f64;
        let s: f64 = (0..z.rows()).map(|i| log_softmax_at(z.row(i), data.y[i])).sum();
        Ok(-s / (n * self.alpha * self.alpha))
    }

    /// Ordinary mean cross-entropy of `softmax(W_L a + b_L)`, ignoring α.
    pub fn standard_loss(&self, data: &LabeledData) -> Result<f64> {
        self.check_labels(&data.y)?;
        self.check_input(&data.x)?;
        let z = self.forward_cache(&data.x).1;
        let s: f64 = (0..z.rows()).map(|i| log_softmax_at(z.row(i), data.y[i])).sum();
        Ok(-s / data.len() as f64)
    }

    /// Loss and exact gradients of [`Mlp::loss`].
    pub fn gradients(&self, data: &LabeledData) -> Result<(f64, MlpGrads)> {
        self.check_input(&data.x)?;
        self.check_labels(&data.y)?;
        let (acts, z) = self.forward_cache(&data.x);
        let n = data.len() as f64;
        let a = self.alpha;
        let mut loss = 0.0;
        // dl/dz_L = (p − y) / (N α)
        let mut dz = z.scale(a);
        for i in 0..dz.rows() {
            let row = dz.row_mut(i);
            loss -= log_softmax_at(row, data.y[i]);
            softmax_in_place(row);
            row[data.y[i]] -= 1.0;
            row.iter_mut().for_each(|v| *v /= n * a);
        }
        loss /= n * a * a;
        let layers = self.num_layers();
        let mut gw = vec![Matrix::zeros(0, 0); layers];
        let mut gb = vec![Vec::new(); layers];
        for l in (0..layers).rev() {
            gw[l] = dz.matmul_tn(&acts[l]);
            gb[l] = (0..dz.cols()).map(|j| (0..dz.rows()).map(|i| dz[(i, j)]).sum()).collect();
            if l > 0 {
                let mut da = dz.matmul(&self.weights[l]);
                for (g, &h) in da.as_mut_slice().iter_mut().zip(acts[l].as_slice()) {
                    if h <= 0.0 {
                        *g = 0.0;
                    }
                }
                dz = da;
            }
        }
        Ok((loss, MlpGrads { weights: gw, biases: gb }))
    }

    pub fn accuracy(&self, data: &LabeledData) -> Result<f64> {
        let pred = self.predict(&data.x)?;
        let correct = pred.iter().zip(&data.y).filter(|(p, y)| p == y).count();
        Ok(correct as f64 / data.len() as f64)
    }

    /// `sqrt(Σ‖W − W₀‖²_F) / sqrt(Σ‖W₀‖²_F)` over all weight matrices.
    pub fn relative_movement(&self, init: &Mlp) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (w, w0) in self.weights.iter().zip(&init.weights) {
            num += w.sub(w0).frobenius_norm().powi(2);
            den += w0.frobenius_norm().powi(2);
        }
        (num / den).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct MlpRun {
    /// Epoch 0 (initial weights) through the final epoch; `step` metadata
    /// holds the epoch.
    pub checkpoints: Vec<TensorMap>,
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
    pub initial: Mlp,
    pub model: Mlp,
}

/// Mini-batch gradient descent with a seeded reshuffle every epoch. Frozen
/// layers (weight and bias) are never updated.
pub fn mlp_train(config: &MlpConfig, data: &LabeledData) -> Result<MlpRun> {
    config.validate()?;
    if data.is_empty() {
        return Err(NetsError::Empty("training data".into()));
    }
    if data.dim() != config.layer_dims[0] {
        return Err(NetsError::Shape(format!("data dim {} vs input {}", data.dim(), config.layer_dims[0])));
    }
    let out_dim = *config.layer_dims.last().expect("validated");
    if let Some(&bad) = data.y.iter().find(|&&c| c >= out_dim) {
        return Err(NetsError::Shape(format!("label {bad} >= output dim {out_dim}")));
    }
    let mut model = Mlp::init(&config.layer_dims, config.alpha, config.seed);
    let initial = model.clone();
    let mut rng = GaussianRng::new(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let snapshot = |m: &Mlp, epoch: usize| {
        let mut map = m.to_map();
        map.set_metadata("step", epoch.to_string());
        map
    };
    let mut checkpoints = vec![snapshot(&model, 0)];
    let mut losses = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = data.subset(chunk);
            let (loss, g) = model.gradients(&batch)?;
            if !loss.is_finite() {
                return Err(NetsError::Divergence { stage: "epoch", index: epoch, loss });
            }
            total += loss * chunk.len() as f64;
            for l in 0..model.num_layers() {
                if config.freeze_layers.contains(&l) {
                    continue;
                }
                for (w, d) in model.weights[l].as_mut_slice().iter_mut().zip(g.weights[l].as_slice()) {
                    *w -= config.lr * d;
                }
                for (b, d) in model.biases[l].iter_mut().zip(&g.biases[l]) {
                    *b -= config.lr * d;
                }
            }
        }
        losses.push(total / data.len() as f64);
        checkpoints.push(snapshot(&model, epoch));
    }
    Ok(MlpRun {
        checkpoints,
        losses,
        initial,
        model,
    })
}

/// Top-1 accuracy; predicted class is the lowest index among tied maxima.
pub fn mlp_eval(weights: &TensorMap, data: &LabeledData) -> Result<EvalResult> {
    let model = Mlp::from_map(weights)?;
    Ok(EvalResult {
        metric: Metric::Accuracy(model.accuracy(data)?),
        n_items: data.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ClusterSpec;

    fn small_data(n: usize) -> LabeledData {
        ClusterSpec {
            classes: 4,
            dim: 6,
            ..ClusterSpec::default()
        }
        .sample(n, 5)
        .unwrap()
    }

    #[test]
    fn alpha_one_matches_standard_loss() {
        let data = small_data(40);
        let m = Mlp::init(&[6, 8, 4], 1.0, 1);
        assert!((m.loss(&data).unwrap() - m.standard_loss(&data).unwrap()).abs() < 1e-12);
        let (l, _) = m.gradients(&data).unwrap();
        assert!((l - m.loss(&data).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn zero_net_predicts_class_zero() {
        let data = ClusterSpec::default().sample(100, 1).unwrap();
        let mut m = Mlp::init(&[64, 16, 10], 1.0, 0);
        m.weights.iter_mut().for_each(|w| *w = Matrix::zeros(w.rows(), w.cols()));
        assert!(m.predict(&data.x).unwrap().iter().all(|&p| p == 0));
        let r = mlp_eval(&m.to_map(), &data).unwrap();
        assert_eq!(r.metric, Metric::Accuracy(0.1));
        assert_eq!(r.n_items, 100);
    }

    #[test]
    fn map_round_trip() {
        let m = Mlp::init(&[5, 7, 3], 15.0, 2);
        assert_eq!(Mlp::from_map(&m.to_map()).unwrap(), m);
        assert!(Mlp::from_map(&TensorMap::new()).is_err());
    }

    #[test]
    fn training_is_deterministic_and_respects_freezing() {
        let data = small_data(64);
        let cfg = MlpConfig {
            layer_dims: vec![6, 8, 8, 4],
            epochs: 3,
            batch_size: 16,
            freeze_layers: vec![0],
            ..MlpConfig::default()
        };
        let a = mlp_train(&cfg, &data).unwrap();
        let b = mlp_train(&cfg, &data).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.checkpoints.len(), 4);
        assert_eq!(a.checkpoints[0].step(), Some(0));
        assert_eq!(a.model.weights[0], a.initial.weights[0]);
        assert_eq!(a.model.biases[0], a.initial.biases[0]);
        assert_ne!(a.model.weights[1], a.initial.weights[1]);
        assert!(a.losses[2] < a.losses[0] * 1.5);
        let bad = MlpConfig { alpha: 0.5, ..cfg };
        assert!(mlp_train(&bad, &data).is_err());
    }
}
