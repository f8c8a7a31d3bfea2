use std::path::Path;

use serde_json::{Map, Value};

use super::{DType, DenseTensor, Result, TensorData, TensorMap, TensorStoreError};

const METADATA_KEY: &str = "__metadata__";

/// Reads a checkpoint container from disk.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<TensorMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| TensorStoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_checkpoint(&bytes)
}

/// Writes `map` in canonical form: tensors in name order with contiguous
/// ascending offsets, header padded with spaces to a multiple of 8 bytes.
/// The output bytes depend only on the map's content.
pub fn write_checkpoint(map: &TensorMap, path: impl AsRef<Path>) -> Result<()> {
    if map.is_empty() {
        return Err(TensorStoreError::EmptyMap);
    }
    let bytes = encode_checkpoint(map)?;
    let path = path.as_ref();
    std::fs::write(path, bytes).map_err(|source| TensorStoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Serializes a map (possibly empty) to container bytes.
pub fn encode_checkpoint(map: &TensorMap) -> Result<Vec<u8>> {
    let mut header = Map::new();
    if !map.metadata().is_empty() {
        let meta: Map<String, Value> = map
            .metadata()
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect();
        header.insert(METADATA_KEY.to_string(), Value::Object(meta));
    }
    let mut offset = 0usize;
    for (name, t) in map.iter() {
        if name == METADATA_KEY {
            return Err(TensorStoreError::MalformedHeader(format!(
                "tensor name {METADATA_KEY:?} is reserved"
            )));
        }
        let nbytes = t.len() * t.dtype().size();
        let mut entry = Map::new();
        entry.insert("dtype".into(), Value::from(t.dtype().as_str()));
        entry.insert("shape".into(), Value::from(t.shape().to_vec()));
        entry.insert("data_offsets".into(), Value::from(vec![offset, offset + nbytes]));
        header.insert(name.to_string(), Value::Object(entry));
        offset += nbytes;
    }
    let mut header_bytes = serde_json::to_vec(&Value::Object(header))
        .map_err(|e| TensorStoreError::MalformedHeader(e.to_string()))?;
    while header_bytes.len() % 8 != 0 {
        header_bytes.push(b' ');
    }

    let mut out = Vec::with_capacity(8 + header_bytes.len() + offset);
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for (_, t) in map.iter() {
        match t.data() {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
    Ok(out)
}

struct RawEntry {
    name: String,
    dtype: DType,
    shape: Vec<usize>,
    begin: usize,
    end: usize,
}

/// Parses container bytes, validating offsets, sizes and finiteness.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<TensorMap> {
    if bytes.len() < 8 {
        return Err(TensorStoreError::TruncatedHeader(format!(
            "file has {} bytes, the length prefix needs 8",
            bytes.len()
        )));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
    let available = (bytes.len() - 8) as u64;
    if header_len > available {
        return Err(TensorStoreError::TruncatedHeader(format!(
            "declared header length {header_len} exceeds the {available} bytes after the prefix"
        )));
    }
    let header_len = header_len as usize;
    let header: Value = serde_json::from_slice(&bytes[8..8 + header_len])
        .map_err(|e| TensorStoreError::MalformedHeader(e.to_string()))?;
    let Value::Object(header) = header else {
        return Err(TensorStoreError::MalformedHeader("header is not a JSON object".into()));
    };
    let payload = &bytes[8 + header_len..];

    let mut map = TensorMap::new();
    let mut entries = Vec::with_capacity(header.len());
    for (name, value) in header {
        if name == METADATA_KEY {
            let Value::Object(meta) = value else {
                return Err(TensorStoreError::MalformedHeader("__metadata__ is not an object".into()));
            };
            for (k, v) in meta {
                let Value::String(s) = v else {
                    return Err(TensorStoreError::MalformedHeader(format!(
                        "metadata value for {k:?} is not a string"
                    )));
                };
                map.set_metadata(k, s);
            }
            continue;
        }
        entries.push(parse_entry(name, &value)?);
    }

    for e in &entries {
        let numel = e
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| TensorStoreError::MalformedHeader(format!("shape of {:?} overflows", e.name)))?;
        let expected = numel
            .checked_mul(e.dtype.size())
            .ok_or_else(|| TensorStoreError::MalformedHeader(format!("size of {:?} overflows", e.name)))?;
        if e.end < e.begin {
            return Err(TensorStoreError::MalformedHeader(format!(
                "tensor {:?} has reversed offsets [{}, {})",
                e.name, e.begin, e.end
            )));
        }
        let actual = e.end - e.begin;
        if actual != expected {
            return Err(TensorStoreError::SizeMismatch {
                name: e.name.clone(),
                expected,
                actual,
            });
        }
    }

    entries.sort_by_key(|e| (e.begin, e.end));
    let mut cursor = 0usize;
    for e in &entries {
        if e.begin != cursor {
            let what = if e.begin < cursor { "overlaps" } else { "leaves a gap before" };
            return Err(TensorStoreError::NonContiguous(format!(
                "tensor {:?} at [{}, {}) {what} offset {cursor}",
                e.name, e.begin, e.end
            )));
        }
        cursor = e.end;
    }
    if cursor != payload.len() {
        return Err(TensorStoreError::NonContiguous(format!(
            "tensors cover {cursor} bytes but the payload has {}",
            payload.len()
        )));
    }

    for e in entries {
        let raw = &payload[e.begin..e.end];
        let data = match e.dtype {
            DType::F32 => TensorData::F32(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect(),
            ),
            DType::F64 => TensorData::F64(
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
        };
        if !data.all_finite() {
            return Err(TensorStoreError::NonFinite { name: e.name });
        }
        let tensor = DenseTensor::new(e.shape, data)
            .map_err(|err| TensorStoreError::MalformedHeader(format!("tensor {:?}: {err}", e.name)))?;
        map.insert(e.name, tensor)?;
    }
    Ok(map)
}

fn parse_entry(name: String, value: &Value) -> Result<RawEntry> {
    let bad = |what: &str| TensorStoreError::MalformedHeader(format!("tensor {name:?}: {what}"));
    let obj = value.as_object().ok_or_else(|| bad("entry is not an object"))?;
    let dtype_str = obj
        .get("dtype")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing string field \"dtype\""))?;
    let dtype = DType::parse(dtype_str).ok_or_else(|| TensorStoreError::UnsupportedDtype {
        name: name.clone(),
        dtype: dtype_str.to_string(),
    })?;
    let shape = obj
        .get("shape")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing array field \"shape\""))?
        .iter()
        .map(|d| d.as_u64().map(|d| d as usize))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| bad("shape entries must be non-negative integers"))?;
    let offsets = obj
        .get("data_offsets")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing array field \"data_offsets\""))?;
    if offsets.len() != 2 {
        return Err(bad("data_offsets must have two entries"));
    }
    let begin = offsets[0].as_u64().ok_or_else(|| bad("offsets must be integers"))? as usize;
    let end = offsets[1].as_u64().ok_or_else(|| bad("offsets must be integers"))? as usize;
    Ok(RawEntry {
        name,
        dtype,
        shape,
        begin,
        end,
    })
}
