//! Checkpoint files (`.auwc`), little-endian:
//!
//! ```text
//! magic "AUWC" | version u16
//! config: gcn_layers u16, gcn_hidden u16 × layers, neck u16 × 2, head u16,
//!         kernel u16, dilations u16 × 3, init_seed u64
//! tensor count u16, then per tensor: rank u8, dims u32 × rank, f32 × len
//! ```
//!
//! Tensors are the parameters in declaration order followed by the 12×12
//! normalized adjacency the fold was trained with.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{init_params, ModelConfig, ModelError, ModelParams};
use crate::feature_io::NUM_ROIS;
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AUWC";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u16),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("checkpoint does not match its config: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    /// Row-major normalized adjacency used by this fold.
    pub adjacency: Tensor<f32>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, CheckpointError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
    fn tensor(&mut self) -> Result<Tensor<f32>, CheckpointError> {
        let rank = self.u8()? as usize;
        let dims = (0..rank)
            .map(|_| self.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n: usize = dims.iter().product();
        let raw = self.take(n.checked_mul(4).ok_or(CheckpointError::Truncated)?)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        Tensor::from_vec(&dims, data).map_err(|e| CheckpointError::Model(e.into()))
    }
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor<f32>) {
    out.push(t.shape().len() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let cfg = &ckpt.params.config;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let mut put16 = |v: usize| out.extend_from_slice(&(v as u16).to_le_bytes());
    put16(cfg.gcn_hidden.len());
    cfg.gcn_hidden.iter().for_each(|&h| put16(h));
    cfg.neck_channels.iter().for_each(|&c| put16(c));
    put16(cfg.head_channels);
    put16(cfg.kernel);
    cfg.dilations.iter().for_each(|&d| put16(d));
    out.extend_from_slice(&cfg.init_seed.to_le_bytes());
    let params = ckpt.params.parameters();
    out.extend_from_slice(&((params.len() + 1) as u16).to_le_bytes());
    for p in params {
        put_tensor(&mut out, &p.value);
    }
    put_tensor(&mut out, &ckpt.adjacency);
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).map_err(|_| CheckpointError::BadMagic)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let layers = r.u16()? as usize;
    let gcn_hidden = (0..layers)
        .map(|_| r.u16().map(usize::from))
        .collect::<Result<Vec<_>, _>>()?;
    let neck_channels = [r.u16()? as usize, r.u16()? as usize];
    let head_channels = r.u16()? as usize;
    let kernel = r.u16()? as usize;
    let dilations = [r.u16()? as usize, r.u16()? as usize, r.u16()? as usize];
    let init_seed = r.u64()?;
    let config = ModelConfig {
        gcn_hidden,
        neck_channels,
        head_channels,
        kernel,
        dilations,
        init_seed,
    };
    let mut params = init_params::<f32>(&config)?;
    let count = r.u16()? as usize;
    let expected = params.parameters().len() + 1;
    if count != expected {
        return Err(CheckpointError::Mismatch(format!(
            "{count} tensors, expected {expected}"
        )));
    }
    for (i, p) in params.parameters_mut().into_iter().enumerate() {
        let t = r.tensor()?;
        if t.shape() != p.value.shape() {
            return Err(CheckpointError::Mismatch(format!(
                "tensor {i} has shape {:?}, expected {:?}",
                t.shape(),
                p.value.shape()
            )));
        }
        p.value = t;
    }
    let adjacency = r.tensor()?;
    if adjacency.shape() != [NUM_ROIS, NUM_ROIS] {
        return Err(CheckpointError::Mismatch(format!(
            "adjacency shape {:?}",
            adjacency.shape()
        )));
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(Checkpoint { params, adjacency })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    fs::write(path, encode_checkpoint(ckpt)).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let cfg = ModelConfig {
            init_seed: 4,
            ..ModelConfig::with_gcn(2, 8)
        };
        Checkpoint {
            params: init_params(&cfg).unwrap(),
            adjacency: Tensor::identity(NUM_ROIS),
        }
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let bytes = encode_checkpoint(&c);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn corrupt_checkpoints() {
        let bytes = encode_checkpoint(&sample());
        assert!(matches!(decode_checkpoint(b"nope"), Err(CheckpointError::BadMagic)));
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 3]),
            Err(CheckpointError::Truncated)
        ));
        let mut extra = bytes.clone();
        extra.push(7);
        assert!(matches!(
            decode_checkpoint(&extra),
            Err(CheckpointError::TrailingBytes(1))
        ));
        let mut wrong = bytes;
        wrong[8] = 9; // first hidden width: 8 -> 9
        assert!(matches!(decode_checkpoint(&wrong), Err(CheckpointError::Mismatch(_))));
    }
}
