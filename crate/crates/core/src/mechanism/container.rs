// Tensor container layout (safetensors-compatible):
//
//   8 bytes  little-endian u64 header length L
//   L bytes  UTF-8 JSON: name -> {"dtype", "shape", "data_offsets": [begin, end]}
//            plus an optional "__metadata__" string map
//   rest     concatenated little-endian tensor data; offsets are relative
//            to the end of the header
//
// Only F32 and F64 are supported. Tensor order follows the order of keys in
// the JSON header, which is also the order the writer lays data out in.

use std::path::Path;

use indexmap::IndexMap;
use serde::Deserialize;
use serde_json::{Map, Value};

use super::{DType, Tensor, TensorData, WeightSet};
use crate::error::{Error, Result};

const METADATA_KEY: &str = "__metadata__";
const HEADER_ALIGN: usize = 8;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderEntry {
    dtype: String,
    shape: Vec<u64>,
    data_offsets: [u64; 2],
}

fn json_offset(header: &[u8], err: &serde_json::Error) -> u64 {
    // serde_json reports 1-based line/column; map back to a byte offset
    let (line, column) = (err.line(), err.column());
    let mut offset = 0usize;
    for (i, l) in header.split(|&b| b == b'\n').enumerate() {
        if i + 1 == line {
            offset += column.saturating_sub(1).min(l.len());
            break;
        }
        offset += l.len() + 1;
    }
    8 + offset.min(header.len()) as u64
}

/// Decode a container from memory.
pub fn from_bytes(bytes: &[u8]) -> Result<WeightSet> {
    if bytes.len() < 8 {
        return Err(Error::Parse {
            offset: 0,
            reason: format!("file is {} bytes, too short for the header length", bytes.len()),
        });
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
    let header_end = 8u64
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len() as u64)
        .ok_or_else(|| {
            Error::LengthMismatch(format!(
                "header declares {header_len} bytes but only {} follow the length prefix",
                bytes.len() - 8
            ))
        })? as usize;
    let header = &bytes[8..header_end];
    let data = &bytes[header_end..];

    let text = std::str::from_utf8(header).map_err(|e| Error::Parse {
        offset: 8 + e.valid_up_to() as u64,
        reason: "header is not valid UTF-8".into(),
    })?;
    let raw: IndexMap<String, Value> = serde_json::from_str(text).map_err(|e| Error::Parse {
        offset: json_offset(header, &e),
        reason: e.to_string(),
    })?;

    let mut metadata = None;
    let mut spans = Vec::with_capacity(raw.len());
    let mut tensors = IndexMap::with_capacity(raw.len());
    for (name, value) in raw {
        if name == METADATA_KEY {
            let map: IndexMap<String, String> = serde_json::from_value(value).map_err(|e| Error::Parse {
                offset: 8,
                reason: format!("`{METADATA_KEY}` must map strings to strings: {e}"),
            })?;
            metadata = Some(map);
            continue;
        }
        let entry: HeaderEntry = serde_json::from_value(value).map_err(|e| Error::Parse {
            offset: 8,
            reason: format!("tensor `{name}`: {e}"),
        })?;
        let dtype = match entry.dtype.as_str() {
            "F32" => DType::F32,
            "F64" => DType::F64,
            other => {
                return Err(Error::Parse {
                    offset: 8,
                    reason: format!("tensor `{name}`: unsupported dtype `{other}`"),
                })
            }
        };
        let [begin, end] = entry.data_offsets;
        if begin > end || end > data.len() as u64 {
            return Err(Error::LengthMismatch(format!(
                "tensor `{name}` spans [{begin}, {end}) but the data section has {} bytes",
                data.len()
            )));
        }
        let shape: Vec<usize> = entry.shape.iter().map(|&d| d as usize).collect();
        let numel = shape
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
            .ok_or_else(|| Error::LengthMismatch(format!("tensor `{name}`: shape overflows")))?;
        let expected = numel
            .checked_mul(dtype.size() as u64)
            .ok_or_else(|| Error::LengthMismatch(format!("tensor `{name}`: shape overflows")))?;
        if end - begin != expected {
            return Err(Error::LengthMismatch(format!(
                "tensor `{name}` has shape {shape:?} ({expected} bytes) but spans {} bytes",
                end - begin
            )));
        }
        let raw_data = &data[begin as usize..end as usize];
        let data = match dtype {
            DType::F32 => TensorData::F32(
                raw_data
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect(),
            ),
            DType::F64 => TensorData::F64(
                raw_data
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
        };
        spans.push((begin, end, name.clone()));
        tensors.insert(name, Tensor { shape, data });
    }

    // the data section must be tiled exactly, without holes or overlaps
    spans.sort();
    let mut cursor = 0u64;
    for (begin, end, name) in &spans {
        if *begin != cursor {
            return Err(Error::LengthMismatch(format!(
                "tensor `{name}` starts at {begin}, expected {cursor} (gap or overlap)"
            )));
        }
        cursor = *end;
    }
    if cursor != data.len() as u64 {
        return Err(Error::LengthMismatch(format!(
            "tensors cover {cursor} bytes but the data section has {}",
            data.len()
        )));
    }

    Ok(WeightSet { tensors, metadata })
}

/// Encode a container. Header is space-padded to an 8-byte boundary.
pub fn to_bytes(ws: &WeightSet) -> Vec<u8> {
    let mut header = Map::new();
    if let Some(meta) = &ws.metadata {
        let m: Map<String, Value> = meta
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect();
        header.insert(METADATA_KEY.into(), Value::Object(m));
    }
    let mut offset = 0u64;
    for (name, t) in &ws.tensors {
        let len = t.byte_len() as u64;
        let mut entry = Map::new();
        entry.insert("dtype".into(), Value::String(t.dtype().as_str().into()));
        entry.insert(
            "shape".into(),
            Value::Array(t.shape.iter().map(|&d| Value::from(d as u64)).collect()),
        );
        entry.insert(
            "data_offsets".into(),
            Value::Array(vec![Value::from(offset), Value::from(offset + len)]),
        );
        header.insert(name.clone(), Value::Object(entry));
        offset += len;
    }
    let mut header = Value::Object(header).to_string().into_bytes();
    let padded = header.len().div_ceil(HEADER_ALIGN) * HEADER_ALIGN;
    header.resize(padded, b' ');

    let mut out = Vec::with_capacity(8 + header.len() + offset as usize);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for t in ws.tensors.values() {
        match &t.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
    out
}

/// Read a container from disk.
pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// Write a container to disk.
pub fn save_weights(ws: &WeightSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(ws)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> WeightSet {
        let mut ws = WeightSet::default();
        ws.insert(
            "w",
            Tensor::new(vec![2, 2], TensorData::F32(vec![1.0, 2.0, 3.0, 4.0])).unwrap(),
        );
        ws
    }

    #[test]
    fn single_tensor_fixture() {
        let bytes = to_bytes(&fixture());
        let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        assert_eq!(header_len % 8, 0);
        let header = std::str::from_utf8(&bytes[8..8 + header_len]).unwrap();
        assert_eq!(
            header.trim_end(),
            r#"{"w":{"dtype":"F32","shape":[2,2],"data_offsets":[0,16]}}"#
        );
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back.get("w").unwrap().data, TensorData::F32(vec![1.0, 2.0, 3.0, 4.0]));
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn empty_container() {
        let bytes = to_bytes(&WeightSet::default());
        let ws = from_bytes(&bytes).unwrap();
        assert!(ws.is_empty());
        // a minimal hand-written empty header is accepted too
        let mut raw = 2u64.to_le_bytes().to_vec();
        raw.extend_from_slice(b"{}");
        assert!(from_bytes(&raw).unwrap().is_empty());
    }

    #[test]
    fn offsets_beyond_file_length() {
        let header = br#"{"w":{"dtype":"F32","shape":[4],"data_offsets":[0,16]}}"#;
        let mut raw = (header.len() as u64).to_le_bytes().to_vec();
        raw.extend_from_slice(header);
        raw.extend_from_slice(&[0u8; 8]);
        assert!(matches!(from_bytes(&raw), Err(Error::LengthMismatch(_))));
    }

    #[test]
    fn header_length_beyond_file() {
        let mut raw = 1000u64.to_le_bytes().to_vec();
        raw.extend_from_slice(b"{}");
        assert!(matches!(from_bytes(&raw), Err(Error::LengthMismatch(_))));
    }

    #[test]
    fn malformed_header_reports_offset() {
        let header = br#"{"w": {"dtype": "F32", oops}}"#;
        let mut raw = (header.len() as u64).to_le_bytes().to_vec();
        raw.extend_from_slice(header);
        match from_bytes(&raw) {
            Err(Error::Parse { offset, .. }) => {
                let pos = header.iter().position(|&b| b == b'o').unwrap() as u64;
                assert_eq!(offset, 8 + pos);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(from_bytes(&[1, 2, 3]), Err(Error::Parse { offset: 0, .. })));
    }

    #[test]
    fn unknown_dtype_rejected() {
        let header = br#"{"w":{"dtype":"BF16","shape":[1],"data_offsets":[0,2]}}"#;
        let mut raw = (header.len() as u64).to_le_bytes().to_vec();
        raw.extend_from_slice(header);
        raw.extend_from_slice(&[0, 0]);
        assert!(matches!(from_bytes(&raw), Err(Error::Parse { .. })));
    }

    #[test]
    fn gaps_and_trailing_bytes_rejected() {
        let header = br#"{"w":{"dtype":"F32","shape":[1],"data_offsets":[4,8]}}"#;
        let mut raw = (header.len() as u64).to_le_bytes().to_vec();
        raw.extend_from_slice(header);
        raw.extend_from_slice(&[0u8; 8]);
        assert!(matches!(from_bytes(&raw), Err(Error::LengthMismatch(_))));

        let mut bytes = to_bytes(&fixture());
        bytes.push(0);
        assert!(matches!(from_bytes(&bytes), Err(Error::LengthMismatch(_))));
    }

    #[test]
    fn metadata_survives() {
        let mut ws = fixture();
        ws.metadata = Some(IndexMap::from([("format".to_string(), "pt".to_string())]));
        let back = from_bytes(&to_bytes(&ws)).unwrap();
        assert_eq!(back, ws);
    }
}
