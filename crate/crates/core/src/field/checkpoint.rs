//! `NEMO` checkpoint files: magic, version, JSON metadata, then the flat
//! parameter vector as little-endian `f32`. Metadata scalars are written
//! as `f64` so that loading at either precision matches `to_precision`.

use thiserror::Error;

use super::{FieldError, HeightField, HeightFieldConfig};
use crate::scalar::Real;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NEMO";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes, expected NEMO")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated: {0}")]
    Truncated(String),
    #[error("checkpoint metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error(transparent)]
    Field(#[from] FieldError),
}

pub fn save_checkpoint<T: Real>(field: &HeightField<T>) -> Vec<u8> {
    let meta = serde_json::to_vec(&field.config().cast::<f64>()).expect("config serializes");
    let mut out = Vec::with_capacity(12 + meta.len() + 4 * field.n_params());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    for p in &field.params {
        out.extend_from_slice(&p.as_f32().to_le_bytes());
    }
    out
}

pub fn load_checkpoint<T: Real>(bytes: &[u8]) -> Result<HeightField<T>, CheckpointError> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < 12 {
        return Err(CheckpointError::Truncated("header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let meta_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let meta_end = 12 + meta_len;
    if bytes.len() < meta_end {
        return Err(CheckpointError::Truncated("metadata".into()));
    }
    let config = serde_json::from_slice::<HeightFieldConfig<f64>>(&bytes[12..meta_end])?.cast::<T>();
    config.validate()?;
    let n = config.param_count();
    let payload = &bytes[meta_end..];
    if payload.len() != 4 * n {
        return Err(CheckpointError::Truncated(format!(
            "expected {} parameter bytes, found {}",
            4 * n,
            payload.len()
        )));
    }
    let params = payload
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    Ok(HeightField::from_params(config, params)?)
}
