//! Binary checkpoint layout (little-endian):
//!
//! ```text
//! "LRDC" | u32 version | u32 meta_len | meta (JSON model config) | u32 n_tensors
//! per tensor: u32 name_len | name | u32 rows | u32 cols | u8 dtype | payload
//! ```
//!
//! `dtype` 0 is f32, 1 is f64. Writers emit f64 so a round trip is exact.

use std::path::Path;

use super::{Model, ModelConfig, ParamStore, TENSOR_NAMES};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LRDC";
const VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Shape(format!("{v} does not fit in u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn write_checkpoint(model: &Model) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let meta = serde_json::to_vec(&model.config)?;
    put_u32(&mut buf, meta.len())?;
    buf.extend_from_slice(&meta);
    let tensors = model.params.tensors();
    put_u32(&mut buf, tensors.len())?;
    for (name, t) in tensors {
        put_u32(&mut buf, name.len())?;
        buf.extend_from_slice(name.as_bytes());
        put_u32(&mut buf, t.rows)?;
        put_u32(&mut buf, t.cols)?;
        buf.push(1);
        for x in &t.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            Error::Data(format!("checkpoint truncated at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Data("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Data(format!("unsupported checkpoint version {version}")));
    }
    let meta_len = r.u32()?;
    let config: ModelConfig = serde_json::from_slice(r.take(meta_len)?)?;
    config.validate()?;
    let n = r.u32()?;
    if n != TENSOR_NAMES.len() {
        return Err(Error::Data(format!(
            "checkpoint has {n} tensors, expected {}",
            TENSOR_NAMES.len()
        )));
    }
    let mut params = ParamStore::init(&config, &mut crate::corpus::seeded_rng(0, 0));
    for (expected, slot) in params.tensors_mut() {
        let name_len = r.u32()?;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Data("tensor name is not UTF-8".into()))?;
        if name != expected {
            return Err(Error::Data(format!(
                "expected tensor `{expected}`, found `{name}`"
            )));
        }
        let (rows, cols) = (r.u32()?, r.u32()?);
        let dtype = r.take(1)?[0];
        let n = rows * cols;
        let data: Vec<f64> = match dtype {
            0 => r
                .take(n * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            1 => r
                .take(n * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            other => return Err(Error::Data(format!("unknown tensor dtype {other}"))),
        };
        if (rows, cols) != slot.shape() {
            return Err(Error::Shape(format!(
                "tensor `{name}` is {rows}x{cols}, config expects {}x{}",
                slot.rows, slot.cols
            )));
        }
        *slot = Matrix::from_vec(rows, cols, data);
    }
    if r.pos != bytes.len() {
        return Err(Error::Data(format!(
            "{} trailing bytes after checkpoint",
            bytes.len() - r.pos
        )));
    }
    params.check_finite()?;
    Model::from_parts(config, params)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, &write_checkpoint(model)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}
