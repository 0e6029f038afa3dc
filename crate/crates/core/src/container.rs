//! Binary tensor container shared by model checkpoints.
//!
//! Layout: 4 magic bytes, `u32` format version, `u32` header length, a UTF-8
//! JSON header, then every tensor as little-endian `f32` in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::nn::Tensor2;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone)]
pub struct Container {
    pub header: Value,
    pub tensors: Vec<(String, Tensor2)>,
}

impl Container {
    /// Removes and returns the tensor called `name`.
    pub fn take(&mut self, name: &str) -> Result<Tensor2> {
        let pos = self
            .tensors
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::format("checkpoint", format!("missing tensor `{name}`")))?;
        Ok(self.tensors.remove(pos).1)
    }

    pub fn take_shaped(&mut self, name: &str, rows: usize, cols: usize) -> Result<Tensor2> {
        let t = self.take(name)?;
        t.check_shape(name, rows, cols)?;
        Ok(t)
    }
}

/// `header` must be a JSON object; a `tensors` listing is added to it.
pub fn encode_container(magic: &[u8; 4], header: &Value, tensors: &[(String, &Tensor2)]) -> Result<Vec<u8>> {
    let mut header = header.clone();
    let obj = header
        .as_object_mut()
        .ok_or_else(|| Error::format("checkpoint header", "not a JSON object"))?;
    let entries: Vec<TensorEntry> = tensors
        .iter()
        .map(|(name, t)| TensorEntry {
            name: name.clone(),
            rows: t.rows(),
            cols: t.cols(),
        })
        .collect();
    obj.insert(
        "tensors".into(),
        serde_json::to_value(entries).expect("tensor listing serializes"),
    );
    let text = serde_json::to_string(&header).expect("header serializes");
    let body: usize = tensors.iter().map(|(_, t)| t.len() * 4).sum();
    let mut out = Vec::with_capacity(12 + text.len() + body);
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    for (_, t) in tensors {
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_container(magic: &[u8; 4], bytes: &[u8]) -> Result<Container> {
    let bad = |detail: String| Error::format("checkpoint", detail);
    if bytes.len() < 12 {
        return Err(bad("file shorter than its fixed header".into()));
    }
    if &bytes[..4] != magic {
        return Err(bad(format!(
            "magic bytes {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let hend = 12usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("header length exceeds file".into()))?;
    let text = std::str::from_utf8(&bytes[12..hend]).map_err(|e| bad(format!("header is not UTF-8: {e}")))?;
    let mut header: Value = serde_json::from_str(text).map_err(|e| bad(format!("header JSON: {e}")))?;
    let entries: Vec<TensorEntry> = header
        .as_object_mut()
        .and_then(|o| o.remove("tensors"))
        .ok_or_else(|| bad("header has no tensor listing".into()))
        .and_then(|v| serde_json::from_value(v).map_err(|e| bad(format!("tensor listing: {e}"))))?;

    let mut pos = hend;
    let mut tensors = Vec::with_capacity(entries.len());
    for e in entries {
        let n = e.rows * e.cols;
        let end = pos + n * 4;
        if end > bytes.len() {
            return Err(bad(format!("tensor `{}` runs past end of file", e.name)));
        }
        let data: Vec<f64> = bytes[pos..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        pos = end;
        tensors.push((e.name, Tensor2::from_vec(e.rows, e.cols, data)?));
    }
    if pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok(Container { header, tensors })
}

pub fn write_container(path: &Path, magic: &[u8; 4], header: &Value, tensors: &[(String, &Tensor2)]) -> Result<()> {
    let bytes = encode_container(magic, header, tensors)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_container(path: &Path, magic: &[u8; 4]) -> Result<Container> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_container(magic, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn round_trip_preserves_f32_values() {
        let a = Tensor2::from_vec(2, 2, vec![0.5, -1.25, 3.0, 1e-3_f32 as f64]).unwrap();
        let b = Tensor2::zeros(0, 3);
        let bytes = encode_container(b"TEST", &json!({"k": 1}), &[("a".into(), &a), ("b".into(), &b)]).unwrap();
        assert_eq!(&bytes[..4], b"TEST");
        let mut c = decode_container(b"TEST", &bytes).unwrap();
        assert_eq!(c.header, json!({"k": 1}));
        assert_eq!(c.take("a").unwrap(), a);
        assert_eq!(c.take_shaped("b", 0, 3).unwrap(), b);
        assert!(c.take("a").is_err());
    }

    #[test]
    fn rejects_corruption() {
        let a = Tensor2::filled(1, 3, 2.0);
        let bytes = encode_container(b"TEST", &json!({}), &[("a".into(), &a)]).unwrap();
        assert!(decode_container(b"XXXX", &bytes).is_err());
        assert!(decode_container(b"TEST", &bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_container(b"TEST", &extra).is_err());
        let mut version = bytes;
        version[4] = 9;
        assert!(decode_container(b"TEST", &version).is_err());
        assert!(encode_container(b"TEST", &json!([1]), &[]).is_err());
    }
}
