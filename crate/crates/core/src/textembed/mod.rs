//! Language-knowledge item vectors and their projection into the model space.
//!
//! Raw vectors come from a precomputed file, a remote embedding service or the
//! offline hash encoder. They are frozen inputs; only the projection is learned.

mod fallback;
mod fetch;
mod file;

use serde::{Deserialize, Serialize};

pub use fallback::{hash_fallback_encoder, tokenize, FallbackEncoder};
pub use fetch::{EmbeddingClient, FetchStats};
pub use file::{
    load_embedding_file, read_binary, read_text, write_binary, write_text, BINARY_MAGIC,
};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// One frozen `d_L`-dimensional vector per item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub vectors: Matrix,
}

impl EmbeddingTable {
    pub fn new(vectors: Matrix) -> Result<Self> {
        if let Some(idx) = vectors.first_non_finite() {
            return Err(Error::NonFinite {
                tensor: "embedding table".into(),
                index: idx,
            });
        }
        Ok(EmbeddingTable { vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols
    }

    pub fn len(&self) -> usize {
        self.vectors.rows
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows == 0
    }

    pub fn row(&self, item: usize) -> &[f64] {
        self.vectors.row(item)
    }
}

/// Affine map `e = e_raw · W + b` from `d_L` to `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    /// `d_L × d`
    pub weight: Matrix,
    /// `1 × d`
    pub bias: Matrix,
}

impl Projection {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.cols {
            return Err(Error::Shape(format!(
                "projection bias has {} entries, weight has {} columns",
                bias.len(),
                weight.cols
            )));
        }
        let d = bias.len();
        Ok(Projection {
            weight,
            bias: Matrix::from_vec(1, d, bias),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols
    }
}

pub fn project(e_raw: &[f64], p: &Projection) -> Result<Vec<f64>> {
    if e_raw.len() != p.in_dim() {
        return Err(Error::Shape(format!(
            "projection expects {} inputs, got {}",
            p.in_dim(),
            e_raw.len()
        )));
    }
    let mut out = p.bias.data.clone();
    project_into(e_raw, p, &mut out);
    Ok(out)
}

/// `out += e_raw · W`. Callers seed `out` with the bias.
pub(crate) fn project_into(e_raw: &[f64], p: &Projection, out: &mut [f64]) {
    for (k, &x) in e_raw.iter().enumerate() {
        if x != 0.0 {
            crate::tensor::axpy(x, p.weight.row(k), out);
        }
    }
}
