//! `TMBC` checkpoints.
//!
//! ```text
//! "TMBC" | u32 version | u32 header_len | header (UTF-8 JSON) | f32 LE blobs
//! ```
//!
//! The header carries the model spec, seed, epoch and a manifest of every
//! tensor with its shape and byte offset into the blob section.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelError, ModelSpec, ParamSet};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"TMBC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epoch: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    seed: u64,
    epoch: usize,
    tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint(path: &Path, model: &Model, meta: CheckpointMeta) -> Result<(), ModelError> {
    let mut offset = 0u64;
    let tensors = model
        .params
        .iter()
        .map(|(name, t)| {
            let e = TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                offset,
            };
            offset += 4 * t.len() as u64;
            e
        })
        .collect();
    let header = Header {
        spec: model.spec,
        seed: meta.seed,
        epoch: meta.epoch,
        tensors,
    };
    let json = serde_json::to_vec(&header).map_err(|e| ModelError::Format(e.to_string()))?;

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for (_, t) in model.params.iter() {
        for &v in t.data() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32, ModelError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Loads a checkpoint, checking every tensor against the layout its spec
/// implies.
pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointMeta), ModelError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ModelError::Format("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(ModelError::Format(format!("unsupported version {version}")));
    }
    let len = read_u32(&mut r)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: Header =
        serde_json::from_slice(&json).map_err(|e| ModelError::Format(e.to_string()))?;
    header.spec.validate()?;

    let mut blob = Vec::new();
    r.read_to_end(&mut blob)?;

    let layout = header.spec.layout();
    let found: usize = header
        .tensors
        .iter()
        .map(|e| e.shape.iter().product::<usize>())
        .sum();
    let expected = header.spec.param_count();
    if found != expected {
        return Err(ModelError::ParamCountMismatch { expected, found });
    }
    if layout.len() != header.tensors.len() {
        return Err(ModelError::Format(format!(
            "{} tensors, layout has {}",
            header.tensors.len(),
            layout.len()
        )));
    }

    let mut entries = Vec::with_capacity(layout.len());
    for ((name, shape), e) in layout.iter().zip(&header.tensors) {
        if *name != e.name || *shape != e.shape {
            return Err(ModelError::Format(format!(
                "tensor {} {:?} where {name} {shape:?} expected",
                e.name, e.shape
            )));
        }
        let n: usize = shape.iter().product();
        let start = e.offset as usize;
        let end = start + 4 * n;
        let bytes = blob
            .get(start..end)
            .ok_or_else(|| ModelError::Format(format!("{name}: blob truncated")))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        entries.push((name.clone(), Tensor::new(shape.clone(), data)?));
    }
    Ok((
        Model {
            spec: header.spec,
            params: ParamSet::new(entries),
        },
        CheckpointMeta {
            seed: header.seed,
            epoch: header.epoch,
        },
    ))
}
