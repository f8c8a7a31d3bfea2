use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use svlens_core::linalg::Matrix;
use svlens_core::surgery::{remove_by_mass, remove_ranks};
use svlens_nets::data::{ClusterSpec, LabeledData};
use svlens_nets::{mlp_train, Mlp, MlpConfig};

use crate::error::{CliError, Result};

pub const LAZY_CSV_SCHEMA: &str = "svlens.lazy_curves.v1 alpha,fraction,accuracy,normalized";

/// Variant with the leading layers frozen at their initialization; both it
/// and a fully trained twin lose `mass_fraction` of the singular-value mass
/// in `layers`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrozenConfig {
    pub layer_dims: Vec<usize>,
    pub freeze_layers: Vec<usize>,
    pub mass_fraction: f64,
    pub layers: Vec<usize>,
}

impl Default for FrozenConfig {
    fn default() -> Self {
        Self {
            layer_dims: vec![64, 256, 256, 128, 128, 10],
            freeze_layers: vec![0, 1],
            mass_fraction: 0.8,
            layers: vec![0, 1],
        }
    }
}

/// MLPs trained with and without the α-scaled softmax, then stripped of
/// their smallest singular values. Training data uses `data_seed`, test data
/// `data_seed + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LazyConfig {
    pub data: ClusterSpec,
    pub train_size: usize,
    pub test_size: usize,
    pub data_seed: u64,
    /// `alpha` is replaced by each entry of `alphas`.
    pub mlp: MlpConfig,
    pub alphas: Vec<f64>,
    pub fractions: Vec<f64>,
    /// Weight matrices whose singular values are removed.
    pub removal_layers: Vec<usize>,
    pub probe_fraction: f64,
    pub frozen: FrozenConfig,
}

impl Default for LazyConfig {
    fn default() -> Self {
        Self {
            data: ClusterSpec {
                separation: 3.0,
                ..ClusterSpec::default()
            },
            train_size: 2000,
            test_size: 1000,
            data_seed: 1,
            mlp: MlpConfig {
                layer_dims: vec![64, 256, 256, 256, 10],
                lr: 0.3,
                epochs: 30,
                batch_size: 32,
                ..MlpConfig::default()
            },
            alphas: vec![1.0, 15.0],
            fractions: (0..10).map(|i| i as f64 / 10.0).collect(),
            removal_layers: vec![0, 1, 2],
            probe_fraction: 0.2,
            frozen: FrozenConfig::default(),
        }
    }
}

impl LazyConfig {
    pub fn reseed(&mut self, seed: u64) {
        self.mlp.seed = seed;
        self.data.means_seed = seed;
        self.data_seed = seed.wrapping_add(1);
    }

    pub fn datasets(&self) -> Result<(LabeledData, LabeledData)> {
        Ok((
            self.data.sample(self.train_size, self.data_seed)?,
            self.data.sample(self.test_size, self.data_seed.wrapping_add(1))?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LazyCurve {
    pub alpha: f64,
    pub accuracy: f64,
    /// `‖W − W₀‖_F / ‖W₀‖_F` over all weight matrices.
    pub movement: f64,
    /// `(fraction removed, test accuracy)`.
    pub points: Vec<(f64, f64)>,
    pub probe_accuracy: f64,
}

impl LazyCurve {
    pub fn probe_drop(&self) -> f64 {
        self.accuracy - self.probe_accuracy
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrozenRow {
    pub variant: String,
    pub accuracy: f64,
    pub pruned_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LazyResult {
    pub probe_fraction: f64,
    pub curves: Vec<LazyCurve>,
    pub frozen: Vec<FrozenRow>,
    pub mass_fraction: f64,
}

impl LazyResult {
    pub fn curve(&self, alpha: f64) -> Option<&LazyCurve> {
        self.curves.iter().find(|c| c.alpha == alpha)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# schema: {LAZY_CSV_SCHEMA}\nalpha,fraction,accuracy,normalized\n");
        for c in &self.curves {
            for &(f, a) in &c.points {
                out.push_str(&format!("{},{f},{a:.12e},{:.12e}\n", c.alpha, a / c.accuracy));
            }
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let curves: Vec<Value> = self
            .curves
            .iter()
            .map(|c| {
                json!({
                    "alpha": c.alpha,
                    "accuracy": c.accuracy,
                    "relative_movement": c.movement,
                    "probe_accuracy": c.probe_accuracy,
                    "probe_drop": c.probe_drop(),
                    "points": c.points,
                })
            })
            .collect();
        json!({
            "probe_fraction": self.probe_fraction,
            "curves": curves,
            "frozen": { "mass_fraction": self.mass_fraction, "rows": self.frozen },
        })
    }
}

/// Zeroes the smallest `round(fraction · count)` singular values of each
/// listed weight matrix.
pub fn remove_smallest_fraction(model: &Mlp, layers: &[usize], fraction: f64) -> Result<Mlp> {
    let mut out = model.clone();
    for &l in layers {
        let w: &Matrix = model
            .weights
            .get(l)
            .ok_or_else(|| CliError::Config(format!("layer {l} does not exist")))?;
        let count = w.rows().min(w.cols());
        let k = ((fraction * count as f64).round() as usize).min(count);
        let ranks: Vec<usize> = (count - k + 1..=count).collect();
        out.weights[l] = remove_ranks(w, &ranks)?.matrix;
    }
    Ok(out)
}

fn curve(cfg: &LazyConfig, alpha: f64, train: &LabeledData, test: &LabeledData) -> Result<LazyCurve> {
    let mlp = MlpConfig {
        alpha,
        ..cfg.mlp.clone()
    };
    let run = mlp_train(&mlp, train).map_err(|e| CliError::from(e).in_step(format!("training alpha={alpha}")))?;
    let points = cfg
        .fractions
        .iter()
        .map(|&f| Ok((f, remove_smallest_fraction(&run.model, &cfg.removal_layers, f)?.accuracy(test)?)))
        .collect::<Result<Vec<_>>>()?;
    let probe = remove_smallest_fraction(&run.model, &cfg.removal_layers, cfg.probe_fraction)?.accuracy(test)?;
    Ok(LazyCurve {
        alpha,
        accuracy: run.model.accuracy(test)?,
        movement: run.model.relative_movement(&run.initial),
        points,
        probe_accuracy: probe,
    })
}

fn frozen_row(cfg: &LazyConfig, freeze: bool, train: &LabeledData, test: &LabeledData) -> Result<FrozenRow> {
    let f = &cfg.frozen;
    let mlp = MlpConfig {
        layer_dims: f.layer_dims.clone(),
        alpha: 1.0,
        freeze_layers: if freeze { f.freeze_layers.clone() } else { Vec::new() },
        ..cfg.mlp.clone()
    };
    let variant = if freeze { "frozen" } else { "trained" };
    let model = mlp_train(&mlp, train)
        .map_err(|e| CliError::from(e).in_step(format!("training {variant} variant")))?
        .model;
    let mut pruned = model.clone();
    for &l in &f.layers {
        let w = model
            .weights
            .get(l)
            .ok_or_else(|| CliError::Config(format!("layer {l} does not exist")))?;
        pruned.weights[l] = remove_by_mass(w, f.mass_fraction)?.matrix;
    }
    Ok(FrozenRow {
        variant: variant.into(),
        accuracy: model.accuracy(test)?,
        pruned_accuracy: pruned.accuracy(test)?,
    })
}

/// Removal curves per α plus the frozen-layer mass-removal comparison. All
/// trainings are independent and run in parallel.
pub fn lazy_experiment(cfg: &LazyConfig) -> Result<LazyResult> {
    let (train, test) = cfg.datasets()?;
    let curves = cfg
        .alphas
        .par_iter()
        .map(|&a| curve(cfg, a, &train, &test))
        .collect::<Result<Vec<_>>>()?;
    let frozen = [false, true]
        .par_iter()
        .map(|&f| frozen_row(cfg, f, &train, &test))
        .collect::<Result<Vec<_>>>()?;
    Ok(LazyResult {
        probe_fraction: cfg.probe_fraction,
        curves,
        frozen,
        mass_fraction: cfg.frozen.mass_fraction,
    })
}
