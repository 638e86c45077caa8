// SPDX-License-Identifier: MIT OR Apache-2.0

//! Portable checkpoint file.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "AGLB-CKPT"                9 bytes magic
//! version                    u8 (currently 1)
//! header_len                 u64
//! header                     header_len bytes of UTF-8 JSON
//! data                       f64 LE arrays, row-major, in manifest order
//! ```
//!
//! The header is `{"config": …, "vocab": [...], "metadata": …, "blocks":
//! [{"name", "shape", "offset", "len"}]}` where `offset` and `len` count
//! bytes from the start of the data section. Block names are
//! `embedding.input`, `layer{l}.w_input`, `layer{l}.w_hidden`,
//! `layer{l}.bias`, `embedding.output`, `output.bias`; gate order inside
//! the layer blocks is `i, f, g, o`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{block_layout, Checkpoint, ModelConfig, TrainingMetadata, Vocab};

pub const MAGIC: &[u8; 9] = b"AGLB-CKPT";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint format version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u8),
    #[error("checkpoint truncated in {block}")]
    Truncated { block: String },
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("block {block}: {reason}")]
    Shape { block: String, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vocab,
    metadata: TrainingMetadata,
    blocks: Vec<BlockEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct BlockEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    len: u64,
}

/// Serializes a checkpoint to bytes.
pub fn to_bytes(ckpt: &Checkpoint) -> Vec<u8> {
    let mut offset = 0u64;
    let blocks: Vec<BlockEntry> = block_layout(&ckpt.config)
        .into_iter()
        .map(|(name, shape)| {
            let len = (shape.iter().product::<usize>() * 8) as u64;
            let e = BlockEntry {
                name,
                shape,
                offset,
                len,
            };
            offset += len;
            e
        })
        .collect();
    let header = Header {
        config: ckpt.config.clone(),
        vocab: ckpt.vocab.clone(),
        metadata: ckpt.metadata.clone(),
        blocks,
    };
    let json = serde_json::to_vec(&header).expect("checkpoint header serializes");

    let mut out = Vec::with_capacity(18 + json.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for block in ckpt.blocks() {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses a checkpoint; nothing is returned unless every block is intact.
pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut pos = MAGIC.len();
    let version = *bytes.get(pos).ok_or_else(|| truncated("version"))?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    pos += 1;
    let len_bytes = bytes.get(pos..pos + 8).ok_or_else(|| truncated("header length"))?;
    let header_len = u64::from_le_bytes(len_bytes.try_into().expect("8 bytes")) as usize;
    pos += 8;
    let header_bytes = bytes
        .get(pos..pos.saturating_add(header_len))
        .ok_or_else(|| truncated("header"))?;
    let header: Header =
        serde_json::from_slice(header_bytes).map_err(|e| CheckpointError::Header(e.to_string()))?;
    pos += header_len;
    let data = &bytes[pos..];

    header
        .config
        .validate()
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    let expected = block_layout(&header.config);
    if expected.len() != header.blocks.len() {
        return Err(CheckpointError::Header(format!(
            "expected {} blocks, manifest lists {}",
            expected.len(),
            header.blocks.len()
        )));
    }

    let mut ckpt = Checkpoint::zeros(header.config.clone(), header.vocab)
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    ckpt.metadata = header.metadata;
    for (((name, shape), entry), dest) in expected
        .iter()
        .zip(&header.blocks)
        .zip(ckpt.blocks_mut())
    {
        if &entry.name != name {
            return Err(CheckpointError::Shape {
                block: entry.name.clone(),
                reason: format!("expected block {name} at this position"),
            });
        }
        if &entry.shape != shape {
            return Err(CheckpointError::Shape {
                block: name.clone(),
                reason: format!("shape {:?} inconsistent with config {:?}", entry.shape, shape),
            });
        }
        let want = dest.len() as u64 * 8;
        if entry.len != want {
            return Err(CheckpointError::Shape {
                block: name.clone(),
                reason: format!("byte length {} != {}", entry.len, want),
            });
        }
        let start = entry.offset as usize;
        let raw = data
            .get(start..start + want as usize)
            .ok_or_else(|| truncated(name))?;
        for (d, chunk) in dest.iter_mut().zip(raw.chunks_exact(8)) {
            *d = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
    }
    Ok(ckpt)
}

fn truncated(block: &str) -> CheckpointError {
    CheckpointError::Truncated {
        block: block.to_string(),
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    fs::write(path, to_bytes(ckpt))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::{init_model, ModelConfig};

    fn sample() -> Checkpoint {
        let vocab = Vocab::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let mut c = init_model(ModelConfig::new(3, 2, 3, 9), vocab, 9).unwrap();
        c.metadata.epoch_losses = vec![0.1 + 0.2, 1.0 / 3.0];
        c
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let bytes = to_bytes(&c);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = to_bytes(&sample());
        bytes[0] = b'X';
        assert!(matches!(from_bytes(&bytes), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn bad_version() {
        let mut bytes = to_bytes(&sample());
        bytes[9] = 7;
        assert!(matches!(
            from_bytes(&bytes),
            Err(CheckpointError::UnsupportedVersion(7))
        ));
    }

    #[test]
    fn truncation_names_block() {
        let bytes = to_bytes(&sample());
        // drop the last 3 values of output.bias and 1 of embedding.output
        let cut = &bytes[..bytes.len() - 8 * 4];
        match from_bytes(cut) {
            Err(CheckpointError::Truncated { block }) => assert_eq!(block, "embedding.output"),
            other => panic!("{other:?}"),
        }
        match from_bytes(&bytes[..30]) {
            Err(CheckpointError::Truncated { block }) => assert_eq!(block, "header"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inconsistent_shape_rejected() {
        let c = sample();
        let bytes = to_bytes(&c);
        let header_len = u64::from_le_bytes(bytes[10..18].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&bytes[18..18 + header_len]).unwrap();
        let tampered = header.replacen("\"shape\":[3,2]", "\"shape\":[2,3]", 1);
        assert_eq!(tampered.len(), header.len());
        let mut out = bytes[..18].to_vec();
        out.extend_from_slice(tampered.as_bytes());
        out.extend_from_slice(&bytes[18 + header_len..]);
        assert!(matches!(from_bytes(&out), Err(CheckpointError::Shape { .. })));
    }
}
