//! Learnable parameters and every forward quantity of the relation-aware scorer.
//!
//! Score of user `u` for target `j` given history `h_1..h_n`:
//!
//! ```text
//! phi(a, r, b) = sum_k a_k r_k b_k                     (DistMult)
//! w_{r,i}      = softmax_i phi(v_{h_i}, r, v_j)         (relation intensity over the history)
//! s_r          = sum_i w_{r,i} v_{h_i}
//! m            = AGG(s_1 .. s_|R|)                      (mean or attention pooling)
//! y            = (u + m) . v_j + b_j
//! ```
//!
//! The relation posterior used by latent relation discovery is a linear
//! classifier over the concatenated projected text embeddings of two items.

mod checkpoint;
mod forward;
mod posterior;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use forward::{aggregate, distmult, ScoreTrace};
pub use posterior::{relation_posterior, ItemLogits, RelationPosterior};

use crate::error::{Error, Result};
use crate::tensor::Matrix;
use crate::textembed::Projection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Mean,
    Attention,
}

impl std::str::FromStr for Aggregation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "attention" => Ok(Aggregation::Attention),
            other => Err(format!("unknown aggregation `{other}` (mean|attention)")),
        }
    }
}

/// What the relation classifier reads: projected text vectors or item ID embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosteriorInput {
    Text,
    Id,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub d: usize,
    pub d_text: usize,
    pub num_predefined: usize,
    pub num_latent: usize,
    pub agg: Aggregation,
    pub posterior_input: PosteriorInput,
    pub max_len: usize,
}

impl ModelConfig {
    pub fn num_relations(&self) -> usize {
        self.num_predefined + self.num_latent
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::config("d", "must be at least 1"));
        }
        if self.num_relations() == 0 {
            return Err(Error::config(
                "num_latent",
                "at least one relation (predefined or latent) is required",
            ));
        }
        if self.d_text == 0 {
            return Err(Error::config("d_text", "must be at least 1"));
        }
        if self.max_len == 0 {
            return Err(Error::config("max_len", "must be at least 1"));
        }
        Ok(())
    }
}

/// All trainable tensors. Relation rows `0..num_predefined` are predefined, the rest latent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    /// `|U| x d`
    pub user_emb: Matrix,
    /// `|V| x d`
    pub item_emb: Matrix,
    /// `|V| x 1`
    pub item_bias: Matrix,
    /// `|R| x d`
    pub rel_emb: Matrix,
    pub projection: Projection,
    /// `2d x |R|`; rows `0..d` read the first item, `d..2d` the second.
    pub cls_w: Matrix,
    /// `1 x |R|`
    pub cls_b: Matrix,
    /// `d x d` attention projection (empty under mean pooling)
    pub att_w: Matrix,
    /// `1 x d` attention query (empty under mean pooling)
    pub att_v: Matrix,
}

pub const TENSOR_NAMES: [&str; 10] = [
    "user_emb",
    "item_emb",
    "item_bias",
    "rel_emb",
    "proj_w",
    "proj_b",
    "cls_w",
    "cls_b",
    "att_w",
    "att_v",
];

fn glorot(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Matrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| dist.sample(rng)).collect())
}

fn normal(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Matrix {
    let dist = Normal::new(0.0, std).expect("positive std");
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| dist.sample(rng)).collect())
}

impl ParamStore {
    /// Embeddings ~ N(0, 0.01), biases 0, dense layers Glorot-uniform.
    pub fn init(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let (d, dl, nr) = (cfg.d, cfg.d_text, cfg.num_relations());
        let user_emb = normal(cfg.n_users, d, 0.01, rng);
        let item_emb = normal(cfg.n_items, d, 0.01, rng);
        let rel_emb = normal(nr, d, 0.01, rng);
        let proj_w = glorot(dl, d, dl, d, rng);
        let proj_b = glorot(1, d, dl, d, rng);
        let cls_w = glorot(2 * d, nr, 2 * d, nr, rng);
        let (att_w, att_v) = match cfg.agg {
            Aggregation::Mean => (Matrix::zeros(0, 0), Matrix::zeros(0, 0)),
            Aggregation::Attention => (glorot(d, d, d, d, rng), glorot(1, d, d, 1, rng)),
        };
        ParamStore {
            user_emb,
            item_emb,
            item_bias: Matrix::zeros(cfg.n_items, 1),
            rel_emb,
            projection: Projection {
                weight: proj_w,
                bias: proj_b,
            },
            cls_w,
            cls_b: Matrix::zeros(1, nr),
            att_w,
            att_v,
        }
    }

    pub fn tensors(&self) -> [(&'static str, &Matrix); 10] {
        [
            (TENSOR_NAMES[0], &self.user_emb),
            (TENSOR_NAMES[1], &self.item_emb),
            (TENSOR_NAMES[2], &self.item_bias),
            (TENSOR_NAMES[3], &self.rel_emb),
            (TENSOR_NAMES[4], &self.projection.weight),
            (TENSOR_NAMES[5], &self.projection.bias),
            (TENSOR_NAMES[6], &self.cls_w),
            (TENSOR_NAMES[7], &self.cls_b),
            (TENSOR_NAMES[8], &self.att_w),
            (TENSOR_NAMES[9], &self.att_v),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Matrix); 10] {
        [
            (TENSOR_NAMES[0], &mut self.user_emb),
            (TENSOR_NAMES[1], &mut self.item_emb),
            (TENSOR_NAMES[2], &mut self.item_bias),
            (TENSOR_NAMES[3], &mut self.rel_emb),
            (TENSOR_NAMES[4], &mut self.projection.weight),
            (TENSOR_NAMES[5], &mut self.projection.bias),
            (TENSOR_NAMES[6], &mut self.cls_w),
            (TENSOR_NAMES[7], &mut self.cls_b),
            (TENSOR_NAMES[8], &mut self.att_w),
            (TENSOR_NAMES[9], &mut self.att_v),
        ]
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows, m.cols);
        ParamStore {
            user_emb: z(&self.user_emb),
            item_emb: z(&self.item_emb),
            item_bias: z(&self.item_bias),
            rel_emb: z(&self.rel_emb),
            projection: Projection {
                weight: z(&self.projection.weight),
                bias: z(&self.projection.bias),
            },
            cls_w: z(&self.cls_w),
            cls_b: z(&self.cls_b),
            att_w: z(&self.att_w),
            att_v: z(&self.att_v),
        }
    }

    pub fn zero(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.data.len()).sum()
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, t) in self.tensors() {
            if let Some(index) = t.first_non_finite() {
                return Err(Error::NonFinite {
                    tensor: name.to_string(),
                    index,
                });
            }
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.item_emb.cols
    }

    pub fn num_relations(&self) -> usize {
        self.rel_emb.rows
    }
}

/// Configuration plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    pub fn new(config: ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let params = ParamStore::init(&config, rng);
        Ok(Model { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let expect = ParamStore::init(&config, &mut crate::corpus::seeded_rng(0, 0));
        for ((name, a), (_, b)) in params.tensors().iter().zip(expect.tensors().iter()) {
            if a.shape() != b.shape() {
                return Err(Error::Shape(format!(
                    "tensor `{name}` is {:?}, config expects {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(Model { config, params })
    }

    pub(crate) fn check_item(&self, item: usize) -> Result<()> {
        if item >= self.config.n_items {
            return Err(Error::Data(format!(
                "item index {item} out of range (|V| = {})",
                self.config.n_items
            )));
        }
        Ok(())
    }

    pub(crate) fn check_user(&self, user: usize) -> Result<()> {
        if user >= self.config.n_users {
            return Err(Error::Data(format!(
                "user index {user} out of range (|U| = {})",
                self.config.n_users
            )));
        }
        Ok(())
    }

    pub(crate) fn check_relation(&self, r: usize) -> Result<()> {
        if r >= self.config.num_relations() {
            return Err(Error::Data(format!(
                "relation index {r} out of range (|R| = {})",
                self.config.num_relations()
            )));
        }
        Ok(())
    }
}
