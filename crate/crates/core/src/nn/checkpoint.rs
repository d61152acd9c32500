//! Model checkpoints: a magic tag, a JSON metadata header and the parameter
//! blocks as little-endian `f32`.
//!
//! ```text
//! "CSIFCKPT" | u32 version | u32 header length | header | block data...
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{build_model, Model};
use super::spec::ModelSpec;
use super::tensor::Scalar;
use crate::error::{ensure, Error, Result};

const MAGIC: &[u8; 8] = b"CSIFCKPT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub architecture: String,
    pub spec: ModelSpec,
    pub init_seed: u64,
    pub leaky_slope: f64,
    pub feedback_bits: usize,
    pub blocks: Vec<BlockInfo>,
}

pub fn to_bytes<T: Scalar>(model: &Model<T>) -> Vec<u8> {
    let spec = model.spec();
    let meta = CheckpointMeta {
        architecture: spec.architecture.name().to_string(),
        spec: spec.clone(),
        init_seed: model.init_seed(),
        leaky_slope: spec.leaky_slope,
        feedback_bits: spec.feedback_bits(),
        blocks: model
            .params()
            .blocks()
            .iter()
            .map(|b| BlockInfo {
                name: b.name.clone(),
                shape: b.shape.clone(),
                trainable: b.trainable,
            })
            .collect(),
    };
    let header = serde_json::to_vec_pretty(&meta).expect("metadata serializes");
    let mut out = Vec::with_capacity(16 + header.len() + 4 * model.params().total_elements());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for b in model.params().blocks() {
        for &x in &b.data {
            out.extend_from_slice(&(x.f64() as f32).to_le_bytes());
        }
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let s = bytes
        .get(at..at + 4)
        .ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
    Ok(u32::from_le_bytes(s.try_into().unwrap()))
}

pub fn from_bytes(bytes: &[u8]) -> Result<(CheckpointMeta, Model<f32>)> {
    ensure!(bytes.len() >= 16 && &bytes[..8] == MAGIC, Format, "not a checkpoint (bad magic)");
    let version = read_u32(bytes, 8)?;
    ensure!(version == VERSION, Format, "unsupported checkpoint version {version}");
    let hlen = read_u32(bytes, 12)? as usize;
    let header = bytes
        .get(16..16 + hlen)
        .ok_or_else(|| Error::Format("checkpoint header truncated".into()))?;
    let meta: CheckpointMeta =
        serde_json::from_slice(header).map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    let mut model = build_model::<f32>(&meta.spec, meta.init_seed)
        .map_err(|e| Error::Format(format!("checkpoint spec: {e}")))?;
    let mut store = model.params().clone();
    ensure!(
        meta.blocks.len() == store.len(),
        Format,
        "checkpoint lists {} blocks, the spec builds {}",
        meta.blocks.len(),
        store.len()
    );
    let mut at = 16 + hlen;
    for (i, info) in meta.blocks.iter().enumerate() {
        let block = store.block_mut(i);
        ensure!(
            info.name == block.name && info.shape == block.shape,
            Format,
            "checkpoint block {} {:?} does not match {} {:?}",
            info.name,
            info.shape,
            block.name,
            block.shape
        );
        let n = block.len();
        let raw = bytes
            .get(at..at + 4 * n)
            .ok_or_else(|| Error::Format(format!("checkpoint data for {} truncated", info.name)))?;
        for (dst, chunk) in block.data.iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes(chunk.try_into().unwrap());
        }
        at += 4 * n;
    }
    ensure!(at == bytes.len(), Format, "{} trailing bytes after checkpoint data", bytes.len() - at);
    model.set_params(store)?;
    Ok((meta, model))
}

pub fn save_checkpoint<T: Scalar>(path: &Path, model: &Model<T>) -> Result<()> {
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(from_bytes(&bytes)?.1)
}

/// Loads a checkpoint and insists that it was trained for `expected`.
pub fn load_checkpoint_for(path: &Path, expected: &ModelSpec) -> Result<Model<f32>> {
    let model = load_checkpoint(path)?;
    let got = model.spec();
    ensure!(
        got == expected,
        Config,
        "checkpoint holds {} (nt={}, ns={}, L={}, {:?}) but the config asks for {} (nt={}, ns={}, L={}, {:?})",
        got.architecture,
        got.nt,
        got.ns,
        got.compressed_dim,
        got.quantizer,
        expected.architecture,
        expected.nt,
        expected.ns,
        expected.compressed_dim,
        expected.quantizer
    );
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::Architecture;
    use crate::quant::QuantizerSpec;

    #[test]
    fn round_trip_is_exact() {
        let spec = ModelSpec::new(Architecture::BiImcsinet, 4, 3, 6, QuantizerSpec::Uniform { bits: 4 }).unwrap();
        let mut model = build_model::<f32>(&spec, 42).unwrap();
        model.params_mut().block_mut(3).data[0] = 0.123;
        let bytes = to_bytes(&model);
        let (meta, back) = from_bytes(&bytes).unwrap();
        assert_eq!(meta.init_seed, 42);
        assert_eq!(meta.architecture, "bi_imcsinet");
        assert_eq!(back.params(), model.params());
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let spec = ModelSpec::new(Architecture::ImcsinetS, 4, 1, 2, QuantizerSpec::Binarize).unwrap();
        let bytes = to_bytes(&build_model::<f32>(&spec, 1).unwrap());
        assert_eq!(from_bytes(&bytes[..bytes.len() - 1]).unwrap_err().class(), "format");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(from_bytes(&bad).unwrap_err().class(), "format");
        let mut long = bytes;
        long.push(0);
        assert_eq!(from_bytes(&long).unwrap_err().class(), "format");
    }

    #[test]
    fn spec_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let spec = ModelSpec::new(Architecture::ImcsinetS, 4, 1, 2, QuantizerSpec::Binarize).unwrap();
        save_checkpoint(&path, &build_model::<f32>(&spec, 1).unwrap()).unwrap();
        assert!(load_checkpoint_for(&path, &spec).is_ok());
        let other = ModelSpec::new(Architecture::ImcsinetS, 4, 1, 3, QuantizerSpec::Binarize).unwrap();
        assert_eq!(load_checkpoint_for(&path, &other).unwrap_err().class(), "config");
        assert_eq!(load_checkpoint(&dir.path().join("missing")).unwrap_err().class(), "io");
    }
}
