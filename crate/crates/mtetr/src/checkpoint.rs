//! Single-file model archive.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header, then every tensor as little-endian `f32` in header order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::loss::UncertaintyState;
use crate::model::Mtetr;

pub const MAGIC: &[u8; 8] = b"MTETRCK\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub config: ModelConfig,
    pub uncertainty: UncertaintyState,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

pub fn to_bytes(model: &Mtetr, metadata: serde_json::Value) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut data: Vec<u8> = Vec::new();
    let mut offset = 0;
    for (name, var) in model.params().entries() {
        let values = var.flatten_all()?.to_vec1::<f32>()?;
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: var.dims().to_vec(),
            offset,
            len: values.len(),
        });
        offset += values.len();
        for v in values {
            data.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        config: model.config().clone(),
        uncertainty: model.uncertainty()?,
        tensors,
        metadata,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(20 + json.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&data);
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<(Mtetr, Header)> {
    let mut r = bytes;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("truncated magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a model checkpoint".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)
        .map_err(|_| Error::Checkpoint("truncated version".into()))?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)
        .map_err(|_| Error::Checkpoint("truncated header length".into()))?;
    let len = u64::from_le_bytes(len) as usize;
    if r.len() < len {
        return Err(Error::Checkpoint("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&r[..len])?;
    let data = &r[len..];
    let model = Mtetr::new(header.config.clone(), 0)?;
    let expected: Vec<(&str, &[usize])> = model.params().entries().map(|(n, v)| (n, v.dims())).collect();
    if expected.len() != header.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "{} tensors stored, {} expected",
            header.tensors.len(),
            expected.len()
        )));
    }
    for (entry, (name, dims)) in header.tensors.iter().zip(&expected) {
        if entry.name != *name || entry.shape != *dims {
            return Err(Error::Checkpoint(format!("tensor `{}` does not match the model layout", entry.name)));
        }
        let start = entry.offset * 4;
        let end = start + entry.len * 4;
        let raw = data
            .get(start..end)
            .ok_or_else(|| Error::Checkpoint(format!("tensor `{}` is truncated", entry.name)))?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        model.set_param(&entry.name, values)?;
    }
    Ok((model, header))
}

pub fn save(model: &Mtetr, path: &Path, metadata: serde_json::Value) -> Result<()> {
    let bytes = to_bytes(model, metadata)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(Mtetr, Header)> {
    from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            res_blocks: 1,
            in_planes: 6,
            planes: 8,
            embed_dim: 8,
            d_model: 8,
            heads: 2,
            ff_dim: 8,
            lstm_hidden: 4,
            head_hidden: 4,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn header_is_versioned() {
        let m = Mtetr::new(tiny(), 1).unwrap();
        let bytes = to_bytes(&m, serde_json::Value::Null).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), VERSION);
        let mut wrong = bytes.clone();
        wrong[8] = 9;
        assert!(matches!(from_bytes(&wrong), Err(Error::Checkpoint(_))));
        assert!(from_bytes(&bytes[..bytes.len() - 4]).is_err());
        assert!(from_bytes(b"garbage!").is_err());
    }

    #[test]
    fn restores_weights() {
        let m = Mtetr::new(tiny(), 7).unwrap();
        let (back, header) = from_bytes(&to_bytes(&m, serde_json::json!({"k": 1})).unwrap()).unwrap();
        assert_eq!(header.metadata["k"], 1);
        for ((n1, a), (n2, b)) in m.params().entries().zip(back.params().entries()) {
            assert_eq!(n1, n2);
            assert_eq!(
                a.flatten_all().unwrap().to_vec1::<f32>().unwrap(),
                b.flatten_all().unwrap().to_vec1::<f32>().unwrap()
            );
        }
    }
}
