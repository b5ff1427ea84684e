//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SNNC"  magic
//! u16     format version (currently 1)
//! u8      model kind (0 single, 1 multi)
//! u32 x4  global_res, hand_res, head_hidden, num_classes
//! u32, u32...  global channel count, channels
//! u32, u32...  hand channel count, channels
//! u32          tensor count
//! per tensor: u32 ndim, u32 x ndim dims
//! f32 x N      parameter data, canonical parameter order
//! ```
//!
//! Checkpoints carry parameters only; freeze state and optimizer state are
//! reconstructed by whoever resumes.

use alloc::vec::Vec;

use super::model::{build_model, ModelConfig, ModelKind, MultiStreamModel};

const MAGIC: &[u8; 4] = b"SNNC";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckpointError {
    BadMagic,
    BadVersion(u16),
    /// Input ended before the declared content.
    Truncated,
    /// Structurally well-formed but internally inconsistent.
    Corrupt(&'static str),
}

impl core::fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CheckpointError::BadMagic => write!(f, "not a model checkpoint (bad magic)"),
            CheckpointError::BadVersion(v) => write!(f, "unsupported checkpoint version {v}"),
            CheckpointError::Truncated => write!(f, "checkpoint ends early"),
            CheckpointError::Corrupt(detail) => write!(f, "corrupt checkpoint: {detail}"),
        }
    }
}

impl core::error::Error for CheckpointError {}

pub fn to_bytes(model: &MultiStreamModel<f32>) -> Vec<u8> {
    let config = model.config();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match model.kind() {
        ModelKind::Single => 0,
        ModelKind::Multi => 1,
    });
    for v in [config.global_res, config.hand_res, config.head_hidden as u32, config.num_classes as u32]
    {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for list in [&config.global_channels, &config.hand_channels] {
        out.extend_from_slice(&(list.len() as u32).to_le_bytes());
        for c in list {
            out.extend_from_slice(&(*c as u32).to_le_bytes());
        }
    }
    let params = model.params();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in &params {
        out.extend_from_slice(&(p.shape().len() as u32).to_le_bytes());
        for d in p.shape() {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
    }
    for p in &params {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.at.checked_add(n).ok_or(CheckpointError::Truncated)?;
        if end > self.bytes.len() {
            return Err(CheckpointError::Truncated);
        }
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, CheckpointError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<MultiStreamModel<f32>, CheckpointError> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let kind = match r.u8()? {
        0 => ModelKind::Single,
        1 => ModelKind::Multi,
        _ => return Err(CheckpointError::Corrupt("unknown model kind")),
    };
    let global_res = r.u32()?;
    let hand_res = r.u32()?;
    let head_hidden = r.u32()? as usize;
    let num_classes = r.u32()? as usize;
    let channel_list = |r: &mut Reader| -> Result<Vec<usize>, CheckpointError> {
        let n = r.u32()? as usize;
        if n > 64 {
            return Err(CheckpointError::Corrupt("implausible block count"));
        }
        (0..n).map(|_| Ok(r.u32()? as usize)).collect()
    };
    let global_channels = channel_list(&mut r)?;
    let hand_channels = channel_list(&mut r)?;
    let config = ModelConfig {
        global_res,
        hand_res,
        global_channels,
        hand_channels,
        head_hidden,
        num_classes,
    };
    let mut model =
        build_model::<f32>(kind, &config, 0).map_err(|_| CheckpointError::Corrupt("bad config"))?;

    let tensor_count = r.u32()? as usize;
    if tensor_count != model.params().len() {
        return Err(CheckpointError::Corrupt("tensor count does not match config"));
    }
    let mut shapes = Vec::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        let ndim = r.u32()? as usize;
        if ndim > 8 {
            return Err(CheckpointError::Corrupt("implausible tensor rank"));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        shapes.push(shape);
    }
    for (p, shape) in model.params_mut().into_iter().zip(&shapes) {
        if p.shape() != shape.as_slice() {
            return Err(CheckpointError::Corrupt("tensor shape does not match config"));
        }
        for i in 0..p.len() {
            p.data_mut()[i] = r.f32()?;
        }
    }
    Ok(model)
}
