//! Checkpoint containers, token streams and activation dumps.
//!
//! The container layout is the widely used "8-byte header length + JSON header
//! + raw little-endian payload" format:
//!
//! ```text
//! [u64 LE header_len][header_len bytes of UTF-8 JSON][payload]
//! ```
//!
//! The header maps each tensor name to
//! `{"dtype": "F32"|"F64", "shape": [..], "data_offsets": [begin, end]}` with
//! offsets relative to the end of the header, and may carry a
//! `"__metadata__"` object of string values.

mod activations;
mod container;
mod role;
mod tokens;

use std::collections::BTreeMap;
use std::path::PathBuf;

pub use activations::{
    activations_from_map, activations_to_map, read_activations, write_activations, ActivationBatch,
};
pub use container::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint};
pub use role::{classify_role, MatrixRole, RoleKind, RoleRule, RoleTable};
pub use tokens::{decode_tokens, encode_tokens, read_tokens, write_tokens, TokenStream};

use crate::linalg::Matrix;

#[derive(Debug, thiserror::Error)]
pub enum TensorStoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("truncated header: {0}")]
    TruncatedHeader(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported dtype {dtype:?} for tensor {name:?}")]
    UnsupportedDtype { name: String, dtype: String },
    #[error("size mismatch for tensor {name:?}: shape requires {expected} bytes, offsets span {actual}")]
    SizeMismatch {
        name: String,
        expected: usize,
        actual: usize,
    },
    #[error("non-contiguous data offsets: {0}")]
    NonContiguous(String),
    #[error("tensor {name:?} contains non-finite values")]
    NonFinite { name: String },
    #[error("duplicate tensor name {0:?}")]
    DuplicateName(String),
    #[error("invalid shape {shape:?} for {len} elements")]
    InvalidShape { shape: Vec<usize>, len: usize },
    #[error("cannot write an empty tensor map")]
    EmptyMap,
    #[error("tensor {name:?} has shape {shape:?}, expected a matrix")]
    NotAMatrix { name: String, shape: Vec<usize> },
    #[error("bad magic: expected \"TOKS\"")]
    BadMagic,
    #[error("unsupported token stream version {0}")]
    UnsupportedVersion(u32),
    #[error("token {token} at position {index} is out of range for vocab size {vocab_size}")]
    TokenOutOfRange {
        index: usize,
        token: u32,
        vocab_size: u32,
    },
    #[error("vocab size must be positive")]
    ZeroVocab,
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("{0} trailing bytes after token payload")]
    TrailingBytes(usize),
    #[error("malformed activation tensor name {0:?}, expected act/<layer>/<batch>")]
    MalformedName(String),
    #[error("dimension mismatch in layer {layer:?}: batch {batch} has width {found}, expected {expected}")]
    DimensionMismatch {
        layer: String,
        batch: usize,
        expected: usize,
        found: usize,
    },
}

pub type Result<T> = std::result::Result<T, TensorStoreError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn as_str(self) -> &'static str {
        match self {
            DType::F32 => "F32",
            DType::F64 => "F64",
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "F32" => Some(DType::F32),
            "F64" => Some(DType::F64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            TensorData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    fn all_finite(&self) -> bool {
        match self {
            TensorData::F32(v) => v.iter().all(|x| x.is_finite()),
            TensorData::F64(v) => v.iter().all(|x| x.is_finite()),
        }
    }
}

/// Dense row-major tensor; `data.len()` always equals the shape product.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: TensorData,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let len = data.len();
        if shape.contains(&0) || shape.iter().product::<usize>() != len {
            return Err(TensorStoreError::InvalidShape { shape, len });
        }
        Ok(Self { shape, data })
    }

    pub fn from_f32(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::new(shape, TensorData::F32(data))
    }

    pub fn from_f64(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::new(shape, TensorData::F64(data))
    }

    /// Stores `m` in the requested dtype (binary32 rounds to nearest).
    pub fn from_matrix(m: &Matrix, dtype: DType) -> Self {
        let shape = vec![m.rows(), m.cols()];
        let data = match dtype {
            DType::F64 => TensorData::F64(m.as_slice().to_vec()),
            DType::F32 => TensorData::F32(m.as_slice().iter().map(|&x| x as f32).collect()),
        };
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.to_f64()
    }

    /// Upcasts a rank-2 tensor to a binary64 matrix.
    pub fn to_matrix(&self) -> Option<Matrix> {
        if !self.is_matrix() {
            return None;
        }
        Some(Matrix::from_vec(self.shape[0], self.shape[1], self.data.to_f64()))
    }
}

/// Named tensors plus string metadata. Names are unique and iterate in
/// lexicographic order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorMap {
    entries: BTreeMap<String, DenseTensor>,
    metadata: BTreeMap<String, String>,
}

impl TensorMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a new tensor; a name that already exists is an error.
    pub fn insert(&mut self, name: impl Into<String>, tensor: DenseTensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(TensorStoreError::DuplicateName(name));
        }
        self.entries.insert(name, tensor);
        Ok(())
    }

    /// Replaces an existing tensor or inserts a new one. Returns the previous
    /// value.
    pub fn replace(&mut self, name: impl Into<String>, tensor: DenseTensor) -> Option<DenseTensor> {
        self.entries.insert(name.into(), tensor)
    }

    /// Builds a map from `(name, tensor)` pairs, rejecting duplicate names.
    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, DenseTensor)>,
        S: Into<String>,
    {
        let mut map = Self::new();
        for (name, t) in entries {
            map.insert(name, t)?;
        }
        Ok(map)
    }

    pub fn get(&self, name: &str) -> Option<&DenseTensor> {
        self.entries.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<DenseTensor> {
        self.entries.remove(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseTensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn set_metadata(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.insert(key.into(), value.into());
    }

    pub fn metadata_value(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    /// Fetches a rank-2 tensor as a binary64 matrix.
    pub fn matrix(&self, name: &str) -> Option<Matrix> {
        self.get(name).and_then(DenseTensor::to_matrix)
    }

    /// Rank-2 tensors with their classified roles, in name order.
    pub fn matrices_with_roles<'a>(
        &'a self,
        table: &'a RoleTable,
    ) -> impl Iterator<Item = (&'a str, &'a DenseTensor, MatrixRole)> + 'a {
        self.iter()
            .filter(|(_, t)| t.is_matrix())
            .map(move |(name, t)| (name, t, table.classify(name)))
    }

    /// Training step recorded under the `step` metadata key, if any.
    pub fn step(&self) -> Option<u64> {
        self.metadata_value("step").and_then(|s| s.parse().ok())
    }
}
