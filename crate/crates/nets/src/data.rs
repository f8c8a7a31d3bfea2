//! Labeled-vector datasets: Gaussian class clusters, and the container form
//! with tensors `x` `[N, d]` and `y` `[N]` (labels as integer-valued binary32).

use std::path::Path;

use serde::{Deserialize, Serialize};
use svlens_core::linalg::{GaussianRng, Matrix};
use svlens_core::tensorstore::{read_checkpoint, write_checkpoint, DType, DenseTensor, TensorMap};

use crate::{NetsError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    /// `[N, d]`.
    pub x: Matrix,
    pub y: Vec<usize>,
}

impl LabeledData {
    pub fn new(x: Matrix, y: Vec<usize>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(NetsError::Shape(format!("{} rows but {} labels", x.rows(), y.len())));
        }
        if y.is_empty() {
            return Err(NetsError::Empty("dataset has no rows".into()));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.y.iter().max().map_or(0, |m| m + 1)
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let d = self.dim();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(self.x.row(i));
        }
        Self {
            x: Matrix::from_vec(idx.len(), d, data),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    pub fn to_map(&self) -> TensorMap {
        let mut map = TensorMap::new();
        map.insert("x", DenseTensor::from_matrix(&self.x, DType::F32)).expect("fresh map");
        let y = self.y.iter().map(|&v| v as f32).collect();
        map.insert("y", DenseTensor::from_f32(vec![self.y.len()], y).expect("len matches"))
            .expect("fresh map");
        map
    }

    pub fn from_map(map: &TensorMap) -> Result<Self> {
        let x = map.matrix("x").ok_or_else(|| NetsError::MissingTensor("x".into()))?;
        let yt = map.get("y").ok_or_else(|| NetsError::MissingTensor("y".into()))?;
        let mut y = Vec::with_capacity(yt.len());
        for v in yt.to_f64_vec() {
            if v < 0.0 || v.fract() != 0.0 {
                return Err(NetsError::Shape(format!("label {v} is not a non-negative integer")));
            }
            y.push(v as usize);
        }
        Self::new(x, y)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(write_checkpoint(&self.to_map(), path)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_map(&read_checkpoint(path)?)
    }
}

/// Gaussian class clusters: means `μ_c ~ N(0, separation²/d · I)` drawn from
/// `means_seed`, samples `μ_c + N(0, noise² I)` from `sample_seed`. Classes
/// are balanced and interleaved (`y_i = i mod classes`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterSpec {
    pub classes: usize,
    pub dim: usize,
    pub separation: f64,
    pub noise: f64,
    pub means_seed: u64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            dim: 64,
            separation: 4.0,
            noise: 1.0,
            means_seed: 0,
        }
    }
}

impl ClusterSpec {
    pub fn means(&self) -> Matrix {
        let mut rng = GaussianRng::new(self.means_seed);
        let sd = self.separation / (self.dim as f64).sqrt();
        Matrix::from_fn(self.classes, self.dim, |_, _| sd * rng.standard_normal())
    }

    pub fn sample(&self, n: usize, sample_seed: u64) -> Result<LabeledData> {
        if self.classes == 0 || self.dim == 0 {
            return Err(NetsError::InvalidConfig("clusters need classes and dim".into()));
        }
        let means = self.means();
        let mut rng = GaussianRng::new(sample_seed);
        let y: Vec<usize> = (0..n).map(|i| i % self.classes).collect();
        let x = Matrix::from_fn(n, self.dim, |i, j| means[(y[i], j)] + self.noise * rng.standard_normal());
        LabeledData::new(x, y)
    }
}
