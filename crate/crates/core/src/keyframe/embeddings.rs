//! Embedding input files.
//!
//! Two encodings carry `(sample_id, float32 vector)` records with the
//! dimension declared up front:
//!
//! * JSON: `{"dim": D, "records": [{"sample_id": "...", "vector": [...]}]}`
//! * binary (`.bin`): magic `CFEMB001`, `u32` dim, `u32` count, then per
//!   record a `u32` id length, the UTF-8 id bytes and `dim` `f32` values,
//!   all little-endian.

use super::{EmbeddingRecord, KeyframeError};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"CFEMB001";

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbeddingFile {
    pub dim: usize,
    pub records: Vec<JsonRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JsonRecord {
    pub sample_id: String,
    pub vector: Vec<f32>,
}

fn bad(msg: impl Into<String>) -> KeyframeError {
    KeyframeError::Format(msg.into())
}

fn check_dims(dim: usize, records: &[EmbeddingRecord]) -> Result<(), KeyframeError> {
    for r in records {
        if r.vector.len() != dim {
            return Err(bad(format!(
                "{} has dimension {}, header says {dim}",
                r.sample_id,
                r.vector.len()
            )));
        }
        if r.vector.iter().any(|x| !x.is_finite()) {
            return Err(bad(format!("{} has a non-finite entry", r.sample_id)));
        }
    }
    Ok(())
}

/// Reads either encoding, chosen by the `.bin` extension.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Vec<EmbeddingRecord>, KeyframeError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let (dim, records) = if path.extension().is_some_and(|e| e == "bin") {
        decode_bin(&bytes)?
    } else {
        let f: EmbeddingFile = serde_json::from_slice(&bytes).map_err(|e| bad(e.to_string()))?;
        let recs = f
            .records
            .into_iter()
            .map(|r| EmbeddingRecord {
                sample_id: r.sample_id,
                vector: r.vector.into_iter().map(f64::from).collect(),
            })
            .collect();
        (f.dim, recs)
    };
    check_dims(dim, &records)?;
    Ok(records)
}

fn decode_bin(mut bytes: &[u8]) -> Result<(usize, Vec<EmbeddingRecord>), KeyframeError> {
    let mut magic = [0u8; 8];
    bytes.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let mut u32_buf = [0u8; 4];
    let mut read_u32 = |b: &mut &[u8]| -> Result<u32, KeyframeError> {
        b.read_exact(&mut u32_buf).map_err(|_| bad("truncated"))?;
        Ok(u32::from_le_bytes(u32_buf))
    };
    let dim = read_u32(&mut bytes)? as usize;
    let count = read_u32(&mut bytes)? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let len = read_u32(&mut bytes)? as usize;
        if bytes.len() < len {
            return Err(bad("truncated id"));
        }
        let (id, rest) = bytes.split_at(len);
        let sample_id = String::from_utf8(id.to_vec()).map_err(|_| bad("id is not UTF-8"))?;
        bytes = rest;
        if bytes.len() < 4 * dim {
            return Err(bad("truncated vector"));
        }
        let (vals, rest) = bytes.split_at(4 * dim);
        let vector = vals
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        bytes = rest;
        out.push(EmbeddingRecord { sample_id, vector });
    }
    if !bytes.is_empty() {
        return Err(bad("trailing bytes"));
    }
    Ok((dim, out))
}

pub fn write_embeddings_bin(path: impl AsRef<Path>, dim: usize, records: &[EmbeddingRecord]) -> Result<(), KeyframeError> {
    check_dims(dim, records)?;
    let mut buf = Vec::new();
    buf.write_all(MAGIC)?;
    buf.write_all(&(dim as u32).to_le_bytes())?;
    buf.write_all(&(records.len() as u32).to_le_bytes())?;
    for r in records {
        buf.write_all(&(r.sample_id.len() as u32).to_le_bytes())?;
        buf.write_all(r.sample_id.as_bytes())?;
        for &x in &r.vector {
            buf.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn write_embeddings_json(path: impl AsRef<Path>, dim: usize, records: &[EmbeddingRecord]) -> Result<(), KeyframeError> {
    check_dims(dim, records)?;
    let f = EmbeddingFile {
        dim,
        records: records
            .iter()
            .map(|r| JsonRecord {
                sample_id: r.sample_id.clone(),
                vector: r.vector.iter().map(|&x| x as f32).collect(),
            })
            .collect(),
    };
    std::fs::write(path, serde_json::to_vec(&f).map_err(|e| bad(e.to_string()))?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<EmbeddingRecord> {
        vec![
            EmbeddingRecord { sample_id: "a".into(), vector: vec![0.5, -1.25, 3.0] },
            EmbeddingRecord { sample_id: "bb".into(), vector: vec![1.0, 2.0, 0.0] },
        ]
    }

    #[test]
    fn both_encodings_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("e.bin");
        let json = dir.path().join("e.json");
        write_embeddings_bin(&bin, 3, &sample()).unwrap();
        write_embeddings_json(&json, 3, &sample()).unwrap();
        assert_eq!(read_embeddings(&bin).unwrap(), sample());
        assert_eq!(read_embeddings(&json).unwrap(), sample());
    }

    #[test]
    fn header_dimension_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let json = dir.path().join("e.json");
        std::fs::write(&json, r#"{"dim": 2, "records": [{"sample_id": "a", "vector": [1, 2, 3]}]}"#).unwrap();
        assert!(matches!(read_embeddings(&json), Err(KeyframeError::Format(_))));
        let bin = dir.path().join("e.bin");
        std::fs::write(&bin, b"CFEMB001\x02\x00").unwrap();
        assert!(read_embeddings(&bin).is_err());
    }
}
