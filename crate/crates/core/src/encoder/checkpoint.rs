//! Binary checkpoint: 8 magic bytes, `V H D` as little-endian u64, then the
//! embedding table and the projection as row-major little-endian f32.
//!
//! Parameters live in f64 during training; writing rounds every entry to the
//! nearest f32. Reading widens exactly, so `write(read(bytes)) == bytes`.

use std::path::Path;

use ndarray::Array2;

use super::EncoderParams;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RAMENCK1";

pub fn to_bytes(params: &EncoderParams) -> Vec<u8> {
    let (v, h, d) = (params.vocab_size(), params.hidden_dim(), params.output_dim());
    let mut out = Vec::with_capacity(8 + 24 + 4 * params.num_parameters());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for dim in [v, h, d] {
        out.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    for x in params.embed.iter().chain(params.proj.iter()) {
        out.extend_from_slice(&(*x as f32).to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8], source: &str) -> Result<EncoderParams> {
    let bad = |msg: &str| Error::parse(source.to_string(), msg.to_string());
    if bytes.len() < 32 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not an encoder checkpoint (bad magic)"));
    }
    let dim = |k: usize| -> Result<usize> {
        let raw = u64::from_le_bytes(bytes[8 + 8 * k..16 + 8 * k].try_into().expect("8 bytes"));
        usize::try_from(raw).map_err(|_| bad("dimension does not fit in memory"))
    };
    let (v, h, d) = (dim(0)?, dim(1)?, dim(2)?);
    let count = v
        .checked_mul(h)
        .and_then(|a| h.checked_mul(d).and_then(|b| a.checked_add(b)))
        .ok_or_else(|| bad("dimensions overflow"))?;
    if bytes.len() - 32 != count * 4 {
        return Err(bad(&format!(
            "expected {} payload bytes for {v}x{h}x{d}, found {}",
            count * 4,
            bytes.len() - 32
        )));
    }
    let mut floats = bytes[32..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))));
    let embed: Vec<f64> = floats.by_ref().take(v * h).collect();
    let proj: Vec<f64> = floats.collect();
    let embed = Array2::from_shape_vec((v, h), embed).map_err(|e| bad(&e.to_string()))?;
    let proj = Array2::from_shape_vec((h, d), proj).map_err(|e| bad(&e.to_string()))?;
    EncoderParams::new(embed, proj)
}

pub fn write_checkpoint(path: impl AsRef<Path>, params: &EncoderParams) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<EncoderParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, &path.display().to_string())
}
