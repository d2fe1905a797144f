//! Reader and writer for the safetensors container: an 8-byte little-endian
//! header length, a JSON header, then raw little-endian tensor bytes.
//!
//! Tensors are surfaced as `[rows, cols]` matrices: rank-1 tensors become a
//! single row, rank > 2 tensors fold trailing axes into the columns.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde_json::{json, Map, Value};

use super::NnError;

fn fmt_err(msg: impl Into<String>) -> NnError {
    NnError::Format(msg.into())
}

pub fn parse(bytes: &[u8]) -> Result<BTreeMap<String, Array2<f64>>, NnError> {
    if bytes.len() < 8 {
        return Err(fmt_err("file shorter than header length prefix"));
    }
    let n = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let body_start = 8usize.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| fmt_err("header overruns file"))?;
    let header: Map<String, Value> =
        serde_json::from_slice(&bytes[8..body_start]).map_err(|e| fmt_err(format!("header json: {e}")))?;
    let data = &bytes[body_start..];
    let mut out = BTreeMap::new();
    for (name, info) in header {
        if name == "__metadata__" {
            continue;
        }
        let dtype = info["dtype"].as_str().ok_or_else(|| fmt_err(format!("{name}: missing dtype")))?;
        let shape: Vec<usize> = info["shape"]
            .as_array()
            .ok_or_else(|| fmt_err(format!("{name}: missing shape")))?
            .iter()
            .map(|d| d.as_u64().map(|d| d as usize))
            .collect::<Option<_>>()
            .ok_or_else(|| fmt_err(format!("{name}: bad shape")))?;
        let offs = info["data_offsets"]
            .as_array()
            .filter(|a| a.len() == 2)
            .and_then(|a| Some((a[0].as_u64()? as usize, a[1].as_u64()? as usize)))
            .ok_or_else(|| fmt_err(format!("{name}: bad data_offsets")))?;
        if offs.0 > offs.1 || offs.1 > data.len() {
            return Err(fmt_err(format!("{name}: data_offsets out of range")));
        }
        let raw = &data[offs.0..offs.1];
        let count: usize = shape.iter().product();
        let values: Vec<f64> = match dtype {
            "F64" => decode(raw, count, &name, |c: [u8; 8]| f64::from_le_bytes(c))?,
            "F32" => decode(raw, count, &name, |c: [u8; 4]| f32::from_le_bytes(c) as f64)?,
            "F16" => decode(raw, count, &name, |c: [u8; 2]| half::f16::from_le_bytes(c).to_f64())?,
            "BF16" => decode(raw, count, &name, |c: [u8; 2]| half::bf16::from_le_bytes(c).to_f64())?,
            "I64" => decode(raw, count, &name, |c: [u8; 8]| i64::from_le_bytes(c) as f64)?,
            other => return Err(fmt_err(format!("{name}: unsupported dtype {other}"))),
        };
        let (rows, cols) = match shape.len() {
            0 => (1, 1),
            1 => (1, shape[0]),
            _ => (shape[0], shape[1..].iter().product()),
        };
        let arr = Array2::from_shape_vec((rows, cols), values).map_err(|e| fmt_err(format!("{name}: {e}")))?;
        out.insert(name, arr);
    }
    Ok(out)
}

fn decode<const W: usize>(raw: &[u8], count: usize, name: &str, f: impl Fn([u8; W]) -> f64) -> Result<Vec<f64>, NnError> {
    if raw.len() != count * W {
        return Err(fmt_err(format!("{name}: byte length {} does not match shape", raw.len())));
    }
    Ok(raw.chunks_exact(W).map(|c| f(c.try_into().expect("chunk width"))).collect())
}

pub fn read(path: &Path) -> Result<BTreeMap<String, Array2<f64>>, NnError> {
    parse(&std::fs::read(path)?)
}

/// Serializes as F64, tensors ordered by name.
pub fn serialize(tensors: &BTreeMap<String, Array2<f64>>, metadata: &BTreeMap<String, String>) -> Vec<u8> {
    let mut header = Map::new();
    if !metadata.is_empty() {
        header.insert("__metadata__".into(), json!(metadata));
    }
    let mut body = Vec::new();
    for (name, t) in tensors {
        let start = body.len();
        for v in t.iter() {
            body.extend_from_slice(&v.to_le_bytes());
        }
        header.insert(
            name.clone(),
            json!({"dtype": "F64", "shape": [t.nrows(), t.ncols()], "data_offsets": [start, body.len()]}),
        );
    }
    let mut head = serde_json::to_vec(&Value::Object(header)).expect("serializable header");
    while (8 + head.len()) % 8 != 0 {
        head.push(b' ');
    }
    let mut out = Vec::with_capacity(8 + head.len() + body.len());
    out.extend_from_slice(&(head.len() as u64).to_le_bytes());
    out.extend_from_slice(&head);
    out.extend_from_slice(&body);
    out
}

pub fn write(path: &Path, tensors: &BTreeMap<String, Array2<f64>>, metadata: &BTreeMap<String, String>) -> Result<(), NnError> {
    std::fs::write(path, serialize(tensors, metadata))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let mut t = BTreeMap::new();
        t.insert("a.weight".to_string(), ndarray::array![[1.5, -2.25], [1e-300, f64::MAX]]);
        t.insert("b".to_string(), ndarray::array![[0.1, 0.2, 0.3]]);
        let bytes = serialize(&t, &BTreeMap::from([("k".to_string(), "v".to_string())]));
        assert_eq!(parse(&bytes).unwrap(), t);
    }

    #[test]
    fn reads_f32_rank1_and_rank3() {
        let mut body = Vec::new();
        for v in [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0] {
            body.extend_from_slice(&v.to_le_bytes());
        }
        let header = br#"{"v":{"dtype":"F32","shape":[2],"data_offsets":[0,8]},"c":{"dtype":"F32","shape":[1,2,3],"data_offsets":[8,32]}}"#;
        let mut bytes = (header.len() as u64).to_le_bytes().to_vec();
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&body);
        let t = parse(&bytes).unwrap();
        assert_eq!(t["v"], ndarray::array![[1.0, 2.0]]);
        assert_eq!(t["c"].dim(), (1, 6));
        assert_eq!(t["c"][[0, 5]], 8.0);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let mut t = BTreeMap::new();
        t.insert("x".to_string(), ndarray::array![[1.0, 2.0]]);
        let bytes = serialize(&t, &BTreeMap::new());
        assert!(parse(&bytes[..bytes.len() - 3]).is_err());
        assert!(parse(&bytes[..5]).is_err());
    }
}
