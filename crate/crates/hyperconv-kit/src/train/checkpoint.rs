//! Checkpoint file format: `HCKPT1` magic, a little-endian u64 manifest
//! length, a JSON manifest, then the raw little-endian tensor payload in
//! manifest order.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::{build_model, Model};
use crate::error::{Error, Result};
use crate::tensor::{Dtype, Scalar, Tensor};

const MAGIC: &[u8; 6] = b"HCKPT1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    /// byte offset into the payload
    pub offset: u64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CheckpointManifest {
    pub version: u32,
    pub arch: crate::arch::ArchConfig,
    pub tensors: Vec<TensorRecord>,
}

pub fn save_checkpoint<T: Scalar>(model: &dyn Model<T>, path: &Path) -> Result<()> {
    let mut records = Vec::new();
    let mut payload: Vec<u8> = Vec::new();
    model.visit_params(&mut |name, t| {
        records.push(TensorRecord {
            name,
            dtype: T::DTYPE,
            shape: t.shape().to_vec(),
            offset: payload.len() as u64,
        });
        for &v in t.data() {
            v.write_le(&mut payload);
        }
    });
    let manifest = CheckpointManifest {
        version: VERSION,
        arch: model.arch(),
        tensors: records,
    };
    let manifest_bytes = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(14 + manifest_bytes.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(manifest_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest_bytes);
    out.extend_from_slice(&payload);
    fs::write(path, out)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Box<dyn Model<T>>> {
    let bytes = fs::read(path)?;
    let bad = |msg: String| Error::Checkpoint(format!("{}: {msg}", path.display()));
    if bytes.len() < 14 || &bytes[..6] != MAGIC {
        return Err(bad("missing HCKPT1 magic".into()));
    }
    let mlen = u64::from_le_bytes(bytes[6..14].try_into().unwrap()) as usize;
    let manifest_end = 14usize
        .checked_add(mlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated manifest".into()))?;
    let manifest: CheckpointManifest = serde_json::from_slice(&bytes[14..manifest_end])?;
    if manifest.version != VERSION {
        return Err(bad(format!(
            "format version {} (this build reads {VERSION})",
            manifest.version
        )));
    }
    let payload = &bytes[manifest_end..];

    // dummy init; every parameter is overwritten from the payload
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = build_model::<T>(&manifest.arch, &mut rng)?;

    let mut expected_offset = 0u64;
    let mut tensors: std::collections::HashMap<String, Tensor<T>> = std::collections::HashMap::new();
    for rec in &manifest.tensors {
        if rec.dtype != T::DTYPE {
            return Err(bad(format!(
                "tensor {} is {}, expected {}",
                rec.name,
                rec.dtype.name(),
                T::DTYPE.name()
            )));
        }
        if rec.offset != expected_offset {
            return Err(bad(format!("non-contiguous offset for tensor {}", rec.name)));
        }
        let numel: usize = rec.shape.iter().product();
        let nbytes = numel * T::BYTES;
        let start = rec.offset as usize;
        let end = start
            .checked_add(nbytes)
            .filter(|&e| e <= payload.len())
            .ok_or_else(|| bad(format!("truncated payload at tensor {}", rec.name)))?;
        let data: Vec<T> = payload[start..end]
            .chunks_exact(T::BYTES)
            .map(T::read_le)
            .collect();
        tensors.insert(rec.name.clone(), Tensor::from_vec(data, &rec.shape)?);
        expected_offset += nbytes as u64;
    }
    if (expected_offset as usize) != payload.len() {
        return Err(bad("payload length disagrees with the manifest".into()));
    }

    let mut missing = Vec::new();
    model.visit_params_mut(&mut |name, t| match tensors.remove(&name) {
        Some(loaded) if loaded.shape() == t.shape() => *t = loaded,
        Some(loaded) => missing.push(format!(
            "{name}: shape {:?} != expected {:?}",
            loaded.shape(),
            t.shape()
        )),
        None => missing.push(format!("{name}: absent from checkpoint")),
    });
    if !missing.is_empty() {
        return Err(bad(missing.join("; ")));
    }
    if !tensors.is_empty() {
        let extra: Vec<String> = tensors.into_keys().collect();
        return Err(bad(format!("unknown tensors in checkpoint: {}", extra.join(", "))));
    }
    Ok(model)
}
