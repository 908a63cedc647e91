//! `NRAY` binary ray-sample dumps.
//!
//! Layout (all little-endian): magic `NRAY`, version `u32 = 1`, ray count
//! `u32`, sample count `u32`, then `ray_offsets` (`u32` per ray), points
//! (3 × `f32` per sample), densities, deltas, transmittances and opacities
//! (`f32` per sample). Weights are not stored.

use thiserror::Error;

use crate::rays::{RayError, RaySampleBatch};
use crate::scalar::Real;

pub const NRAY_MAGIC: &[u8; 4] = b"NRAY";
pub const NRAY_VERSION: u32 = 1;
/// Absolute tolerance for stored `T`/`α` against the recomputed recursion.
pub const NRAY_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Error, PartialEq)]
pub enum NrayError {
    #[error("bad magic bytes, expected NRAY")]
    BadMagic,
    #[error("unsupported NRAY version {0}")]
    Version(u32),
    #[error("length inconsistency: {0}")]
    Length(String),
    #[error("invalid ray samples: {0}")]
    Invalid(#[from] RayError),
}

pub fn write_nray<T: Real>(batch: &RaySampleBatch<T>) -> Vec<u8> {
    let s = batch.len();
    let r = batch.n_rays();
    let mut out = Vec::with_capacity(16 + 4 * r + 4 * 7 * s);
    out.extend_from_slice(NRAY_MAGIC);
    for v in [NRAY_VERSION, r as u32, s as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &o in &batch.ray_offsets {
        out.extend_from_slice(&(o as u32).to_le_bytes());
    }
    for p in &batch.points {
        for c in p {
            out.extend_from_slice(&c.as_f32().to_le_bytes());
        }
    }
    for arr in [
        &batch.densities,
        &batch.deltas,
        &batch.transmittances,
        &batch.opacities,
    ] {
        for v in arr.iter() {
            out.extend_from_slice(&v.as_f32().to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8], NrayError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            NrayError::Length(format!(
                "truncated while reading {what}: need {n} bytes at offset {}, have {}",
                self.pos,
                self.bytes.len().saturating_sub(self.pos)
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, NrayError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32s<T: Real>(&mut self, n: usize, what: &str) -> Result<Vec<T>, NrayError> {
        let bytes = self.take(4 * n, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect())
    }
}

/// Parses and validates a dump. Transmittance and opacity are recomputed
/// from density and step size and must agree with the stored values within
/// [`NRAY_TOLERANCE`].
pub fn read_nray<T: Real>(bytes: &[u8]) -> Result<RaySampleBatch<T>, NrayError> {
    let mut rd = Reader { bytes, pos: 0 };
    if bytes.len() < 4 || &bytes[..4] != NRAY_MAGIC {
        return Err(NrayError::BadMagic);
    }
    rd.pos = 4;
    let version = rd.u32("version")?;
    if version != NRAY_VERSION {
        return Err(NrayError::Version(version));
    }
    let r = rd.u32("ray count")? as usize;
    let s = rd.u32("sample count")? as usize;
    let expected = 16usize
        .checked_add(4 * r)
        .and_then(|v| v.checked_add(4 * 7 * s))
        .ok_or_else(|| NrayError::Length("counts overflow".into()))?;
    if bytes.len() != expected {
        return Err(NrayError::Length(format!(
            "{r} rays and {s} samples need {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let ray_offsets: Vec<usize> = (0..r)
        .map(|_| rd.u32("ray offsets").map(|v| v as usize))
        .collect::<Result<_, _>>()?;
    let flat: Vec<T> = rd.f32s(3 * s, "points")?;
    let points = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    let densities = rd.f32s(s, "densities")?;
    let deltas = rd.f32s(s, "deltas")?;
    let transmittances = rd.f32s(s, "transmittances")?;
    let opacities = rd.f32s(s, "opacities")?;

    let stored = RaySampleBatch {
        points,
        densities,
        deltas,
        transmittances,
        opacities,
        weights: vec![T::zero(); s],
        ray_offsets,
    };
    stored.validate(T::lit(NRAY_TOLERANCE))?;
    let RaySampleBatch {
        points,
        densities,
        deltas,
        ray_offsets,
        ..
    } = stored;
    Ok(RaySampleBatch::from_densities(points, densities, deltas, ray_offsets)?)
}
