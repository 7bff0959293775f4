use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::EmbeddingTable;
use crate::corpus::IdMap;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Binary layout: `LRDE`, u32 count, u32 dim, then `count * dim` little-endian f32, row-major.
pub const BINARY_MAGIC: &[u8; 4] = b"LRDE";

/// Loads a text or binary embedding file aligned to `items`.
///
/// Text files carry a `count dim` header followed by `raw_item_id v1 .. v_dim`
/// rows. Binary files are detected by their magic and must list items in index order.
pub fn load_embedding_file(path: &Path, items: &IdMap) -> Result<EmbeddingTable> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(BINARY_MAGIC) {
        let table = decode_binary(&bytes, path)?;
        if table.len() != items.len() {
            return Err(Error::Data(format!(
                "{}: {} rows for a vocabulary of {} items",
                path.display(),
                table.len(),
                items.len()
            )));
        }
        return Ok(table);
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: "neither LRDE binary nor UTF-8 text".into(),
    })?;
    parse_text(&text, path, items)
}

pub fn read_text(path: &Path, items: &IdMap) -> Result<EmbeddingTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_text(&text, path, items)
}

fn parse_text(text: &str, path: &Path, items: &IdMap) -> Result<EmbeddingTable> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
    let mut h = header.split_whitespace();
    let (count, dim) = match (h.next(), h.next(), h.next()) {
        (Some(c), Some(d), None) => (
            c.parse::<usize>()
                .map_err(|_| perr(1, format!("bad count `{c}`")))?,
            d.parse::<usize>()
                .map_err(|_| perr(1, format!("bad dimension `{d}`")))?,
        ),
        _ => return Err(perr(1, "header must be `count dim`".into())),
    };
    if dim == 0 {
        return Err(perr(1, "dimension must be positive".into()));
    }

    let mut vectors = Matrix::zeros(items.len(), dim);
    let mut filled = vec![false; items.len()];
    let mut rows = 0;
    for (lineno, line) in lines {
        let mut fields = line.split_whitespace();
        let id = fields.next().unwrap_or_default();
        let values: Vec<&str> = fields.collect();
        if values.len() != dim {
            return Err(perr(
                lineno + 1,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        let item = items
            .get(id)
            .ok_or_else(|| perr(lineno + 1, format!("unknown item_id `{id}`")))?;
        if filled[item] {
            return Err(perr(lineno + 1, format!("duplicate item_id `{id}`")));
        }
        let row = vectors.row_mut(item);
        for (slot, v) in row.iter_mut().zip(&values) {
            let x: f64 = v
                .parse()
                .map_err(|_| perr(lineno + 1, format!("bad value `{v}`")))?;
            if !x.is_finite() {
                return Err(perr(lineno + 1, format!("non-finite value `{v}`")));
            }
            *slot = x;
        }
        filled[item] = true;
        rows += 1;
    }
    if rows != count {
        return Err(Error::Data(format!(
            "{}: header declares {count} rows, found {rows}",
            path.display()
        )));
    }
    let missing: Vec<&str> = filled
        .iter()
        .enumerate()
        .filter(|(_, f)| !**f)
        .map(|(i, _)| items.raw(i))
        .collect();
    if !missing.is_empty() {
        let shown: BTreeSet<&str> = missing.iter().take(20).copied().collect();
        return Err(Error::Data(format!(
            "{}: {} items have no embedding: {:?}",
            path.display(),
            missing.len(),
            shown
        )));
    }
    EmbeddingTable::new(vectors)
}

pub fn write_text(path: &Path, table: &EmbeddingTable, items: &IdMap) -> Result<()> {
    let mut out = format!("{} {}\n", table.len(), table.dim());
    for i in 0..table.len() {
        out.push_str(items.raw(i));
        for v in table.row(i) {
            out.push(' ');
            out.push_str(&(*v as f32).to_string());
        }
        out.push('\n');
    }
    crate::io::write_atomic(path, out.as_bytes())
}

pub fn read_binary(path: &Path) -> Result<EmbeddingTable> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_binary(&bytes, path)
}

fn decode_binary(bytes: &[u8], path: &Path) -> Result<EmbeddingTable> {
    let bad = |msg: &str| Error::Data(format!("{}: {msg}", path.display()));
    if bytes.len() < 12 || &bytes[..4] != BINARY_MAGIC {
        return Err(bad("missing LRDE header"));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[12..];
    if payload.len() != count * dim * 4 {
        return Err(bad(&format!(
            "payload of {} bytes does not match {count} x {dim} f32",
            payload.len()
        )));
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    EmbeddingTable::new(Matrix::from_vec(count, dim, data))
}

pub fn write_binary(path: &Path, table: &EmbeddingTable) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + table.vectors.data.len() * 4);
    buf.write_all(BINARY_MAGIC).unwrap();
    buf.extend_from_slice(&(table.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(table.dim() as u32).to_le_bytes());
    for v in &table.vectors.data {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    crate::io::write_atomic(path, &buf)
}
