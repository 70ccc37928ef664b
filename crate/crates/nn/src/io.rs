//! Model file.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "HONN"
//! 4       4     u32 LE format version (1)
//! 8       4     u32 LE header length L
//! 12      L     UTF-8 JSON {"spec": ModelSpec, "meta": ModelMeta}
//! 12+L    8·P   f64 LE parameters, Model::params order
//! ...     8·B   f64 LE batch-norm running mean, var per layer
//! end-4   4     u32 LE CRC-32 of every preceding byte
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::NnError;
use crate::float::Float;
use crate::model::{Model, ModelMeta};
use crate::spec::ModelSpec;

pub const MAGIC: &[u8; 4] = b"HONN";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    meta: ModelMeta,
}

pub fn to_bytes<F: Float>(model: &Model<F>) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        spec: model.spec().clone(),
        meta: model.meta.clone(),
    })
    .expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for t in model.params().into_iter().chain(model.buffers()) {
        for v in t {
            out.extend_from_slice(&v.f64().to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Parse a model file. With `expected_layout`, a model trained on another
/// feature layout is rejected.
pub fn from_bytes<F: Float>(bytes: &[u8], expected_layout: Option<&str>) -> Result<Model<F>, NnError> {
    if bytes.len() < 16 {
        return Err(NnError::Checksum);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().expect("4 bytes")) {
        return Err(NnError::Checksum);
    }
    if &body[..4] != MAGIC {
        return Err(NnError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(body[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(NnError::Version(version));
    }
    let hlen = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes")) as usize;
    let hend = 12usize.checked_add(hlen).filter(|&e| e <= body.len()).ok_or_else(|| NnError::Format("header overruns file".into()))?;
    let header: Header = serde_json::from_slice(&body[12..hend]).map_err(|e| NnError::Format(format!("header: {e}")))?;
    if let Some(want) = expected_layout {
        if header.meta.layout != want {
            return Err(NnError::Layout {
                expected: want.to_string(),
                found: header.meta.layout,
            });
        }
    }
    let mut model = Model::<F>::new(header.spec, 0)?;
    model.meta = header.meta;
    let blob = &body[hend..];
    let want: usize = model.params().iter().chain(model.buffers().iter()).map(|t| t.len()).sum::<usize>() * 8;
    if blob.len() != want {
        return Err(NnError::Format(format!("{} parameter bytes, expected {want}", blob.len())));
    }
    let mut vals = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut fill = |t: &mut Vec<F>| -> Result<(), NnError> {
        for x in t.iter_mut() {
            let v = vals.next().expect("length checked");
            if !v.is_finite() {
                return Err(NnError::NonFinite("load".into()));
            }
            *x = F::of(v);
        }
        Ok(())
    };
    for t in model.params_mut() {
        fill(t)?;
    }
    for t in model.buffers_mut() {
        fill(t)?;
    }
    Ok(model)
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] NnError),
}

pub fn save<F: Float>(model: &Model<F>, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, to_bytes(model))
}

pub fn load<F: Float>(path: &Path, expected_layout: Option<&str>) -> Result<Model<F>, LoadError> {
    Ok(from_bytes(&std::fs::read(path)?, expected_layout)?)
}
