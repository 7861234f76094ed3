//! Binary checkpoint format.
//!
//! ```text
//! magic        8 bytes  "DORACKPT"
//! version      u32      FORMAT_VERSION
//! heads        u32
//! d_head       u32
//! d_model      u32
//! variant      u8 length + ASCII code (e.g. "NO_VGAR")
//! config       u32 length + JSON model config
//! meta         u32 length + JSON metadata
//! blocks       u32 count, then per block:
//!                u16 name length + UTF-8 name, u32 rows, u32 cols,
//!                rows * cols f32 values, row-major
//! ```
//!
//! Integers and floats are little-endian. Weights are stored as `f32`; a
//! model whose weights are already `f32`-representable round-trips exactly.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::coattention::AblationVariant;
use crate::error::{Error, Result};
use crate::model::{DoraModel, ModelConfig};
use crate::params::ParamTree;

pub const MAGIC: &[u8; 8] = b"DORACKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: Option<usize>,
    pub valid_weighted_f1: Option<f64>,
}

pub fn encode_checkpoint(model: &DoraModel, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend(FORMAT_VERSION.to_le_bytes());
    let c = &model.config;
    for v in [c.heads, c.d_head, c.d_model] {
        out.extend((v as u32).to_le_bytes());
    }
    let code = c.variant.code().as_bytes();
    out.push(code.len() as u8);
    out.extend_from_slice(code);
    for blob in [serde_json::to_vec(c)?, serde_json::to_vec(meta)?] {
        out.extend((blob.len() as u32).to_le_bytes());
        out.extend(blob);
    }
    let tensors = model.tensors();
    out.extend((tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        let name = name.as_bytes();
        out.extend((name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.extend((t.nrows() as u32).to_le_bytes());
        out.extend((t.ncols() as u32).to_le_bytes());
        for v in t.iter() {
            out.extend((*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(DoraModel, CheckpointMeta)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let (heads, d_head, d_model) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let len = r.take(1)?[0] as usize;
    let code = std::str::from_utf8(r.take(len)?)
        .map_err(|_| Error::Checkpoint("variant is not ASCII".into()))?;
    let variant: AblationVariant = code.parse()?;
    let len = r.u32()? as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(len)?)?;
    let len = r.u32()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(len)?)?;
    if (config.heads, config.d_head, config.d_model, config.variant) != (heads, d_head, d_model, variant) {
        return Err(Error::Checkpoint(
            "header fields disagree with the embedded config".into(),
        ));
    }

    let mut model = DoraModel::init(config, 0)?;
    let count = r.u32()? as usize;
    let mut slots = model.tensors_mut();
    if count != slots.len() {
        return Err(Error::Checkpoint(format!(
            "{count} parameter blocks, config implies {}",
            slots.len()
        )));
    }
    for (expected, slot) in slots.iter_mut() {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("block name is not UTF-8".into()))?;
        if name != expected {
            return Err(Error::Checkpoint(format!(
                "block {name:?} where {expected:?} was expected"
            )));
        }
        let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
        if slot.dim() != (rows, cols) {
            return Err(Error::Checkpoint(format!(
                "block {name} is {rows}x{cols}, expected {}x{}",
                slot.nrows(),
                slot.ncols()
            )));
        }
        let raw = r.take(rows * cols * 4)?;
        let values: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        **slot = Array2::from_shape_vec((rows, cols), values).expect("size checked");
    }
    drop(slots);
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after last block".into()));
    }
    if !model.all_finite() {
        return Err(Error::Checkpoint("non-finite weights".into()));
    }
    Ok((model, meta))
}

pub fn save_checkpoint(model: &DoraModel, path: &Path, meta: &CheckpointMeta) -> Result<()> {
    let bytes = encode_checkpoint(model, meta)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(DoraModel, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    decode_checkpoint(&bytes)
}
