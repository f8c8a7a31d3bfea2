//! Activation dumps: containers whose tensors are named
//! `act/<layer_id>/<batch_index>`, each a `[tokens, dim]` binary32 matrix.
//! Layer ids may themselves contain `/`; the batch index is the last segment.

use std::collections::BTreeMap;
use std::path::Path;

use super::{read_checkpoint, write_checkpoint, DType, DenseTensor, Result, TensorMap, TensorStoreError};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationBatch {
    pub layer_id: String,
    pub batch_index: usize,
    /// `[tokens_in_batch, dim]`.
    pub values: Matrix,
}

impl ActivationBatch {
    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn tensor_name(&self) -> String {
        format!("act/{}/{}", self.layer_id, self.batch_index)
    }
}

fn parse_name(name: &str) -> Result<(String, usize)> {
    let malformed = || TensorStoreError::MalformedName(name.to_string());
    let rest = name.strip_prefix("act/").ok_or_else(malformed)?;
    let (layer, batch) = rest.rsplit_once('/').ok_or_else(malformed)?;
    if layer.is_empty() || batch.is_empty() || !batch.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed());
    }
    let batch = batch.parse().map_err(|_| malformed())?;
    Ok((layer.to_string(), batch))
}

/// Decodes batches from an in-memory map, grouped by layer id (lexicographic)
/// and ordered by batch index within a layer.
pub fn activations_from_map(map: &TensorMap) -> Result<Vec<ActivationBatch>> {
    let mut layers: BTreeMap<String, BTreeMap<usize, Matrix>> = BTreeMap::new();
    for (name, t) in map.iter() {
        let (layer, batch) = parse_name(name)?;
        let values = t.to_matrix().ok_or_else(|| TensorStoreError::NotAMatrix {
            name: name.to_string(),
            shape: t.shape().to_vec(),
        })?;
        let slot = layers.entry(layer).or_default();
        if slot.insert(batch, values).is_some() {
            return Err(TensorStoreError::MalformedName(format!(
                "{name} (batch index {batch} appears twice)"
            )));
        }
    }
    let mut out = Vec::new();
    for (layer, batches) in layers {
        let mut expected = None;
        for (batch_index, values) in batches {
            let dim = values.cols();
            match expected {
                None => expected = Some(dim),
                Some(e) if e != dim => {
                    return Err(TensorStoreError::DimensionMismatch {
                        layer,
                        batch: batch_index,
                        expected: e,
                        found: dim,
                    })
                }
                Some(_) => {}
            }
            out.push(ActivationBatch {
                layer_id: layer.clone(),
                batch_index,
                values,
            });
        }
    }
    Ok(out)
}

pub fn read_activations(path: impl AsRef<Path>) -> Result<Vec<ActivationBatch>> {
    activations_from_map(&read_checkpoint(path)?)
}

/// Builds the container map for a set of batches, stored as binary32.
pub fn activations_to_map(batches: &[ActivationBatch]) -> Result<TensorMap> {
    let mut map = TensorMap::new();
    for b in batches {
        map.insert(b.tensor_name(), DenseTensor::from_matrix(&b.values, DType::F32))?;
    }
    Ok(map)
}

pub fn write_activations(batches: &[ActivationBatch], path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint(&activations_to_map(batches)?, path)
}

#[cfg(test)]
mod tests {
    use super::super::decode_checkpoint;
    use super::*;

    fn batch(layer: &str, idx: usize, rows: usize, cols: usize) -> ActivationBatch {
        ActivationBatch {
            layer_id: layer.into(),
            batch_index: idx,
            values: Matrix::from_fn(rows, cols, |i, j| (i + j) as f64),
        }
    }

    #[test]
    fn groups_by_layer_and_orders_batches() {
        let map = activations_to_map(&[
            batch("L0", 1, 3, 4),
            batch("L0", 0, 2, 4),
            batch("blocks.0.attn.q_proj", 10, 1, 2),
            batch("blocks.0.attn.q_proj", 2, 1, 2),
        ])
        .unwrap();
        let got = activations_from_map(&map).unwrap();
        let summary: Vec<(String, usize, usize)> = got
            .iter()
            .map(|b| (b.layer_id.clone(), b.batch_index, b.values.rows()))
            .collect();
        assert_eq!(
            summary,
            vec![
                ("L0".into(), 0, 2),
                ("L0".into(), 1, 3),
                ("blocks.0.attn.q_proj".into(), 2, 1),
                ("blocks.0.attn.q_proj".into(), 10, 1),
            ]
        );
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let map = activations_to_map(&[batch("L0", 0, 2, 4), batch("L0", 1, 2, 5)]).unwrap();
        let err = activations_from_map(&map).unwrap_err();
        assert!(err.to_string().starts_with("dimension mismatch"), "{err}");
    }

    #[test]
    fn malformed_names() {
        for name in ["w", "act/L0", "act/L0/x", "act//3", "act/L0/"] {
            let mut map = TensorMap::new();
            map.insert(name, DenseTensor::from_f32(vec![1, 1], vec![0.0]).unwrap()).unwrap();
            assert!(
                matches!(activations_from_map(&map), Err(TensorStoreError::MalformedName(_))),
                "{name}"
            );
        }
    }

    #[test]
    fn empty_container_gives_no_batches() {
        let mut bytes = 2u64.to_le_bytes().to_vec();
        bytes.extend_from_slice(b"{}");
        let map = decode_checkpoint(&bytes).unwrap();
        assert!(activations_from_map(&map).unwrap().is_empty());
    }
}
