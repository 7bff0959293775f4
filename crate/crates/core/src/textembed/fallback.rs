use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::EmbeddingTable;
use crate::tensor::Matrix;

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn token_seed(token: &str, seed: u64) -> u64 {
    // FNV-1a, then a splitmix64 finaliser folded with the seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in token.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn token_vector(token: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(token_seed(token, seed));
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Offline text encoder: mean of per-token Gaussian vectors, L2-normalised.
/// Tokens are summed in sorted order so the result only depends on the token multiset.
pub fn hash_fallback_encoder(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    FallbackEncoder::new(dim, seed).encode(text)
}

/// [`hash_fallback_encoder`] with a per-token vector cache.
pub struct FallbackEncoder {
    dim: usize,
    seed: u64,
    cache: HashMap<String, Vec<f64>>,
}

impl FallbackEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 1, "fallback dimension must be positive");
        FallbackEncoder {
            dim,
            seed,
            cache: HashMap::new(),
        }
    }

    pub fn encode(&mut self, text: &str) -> Vec<f64> {
        let mut tokens = tokenize(text);
        let mut out = vec![0.0; self.dim];
        if tokens.is_empty() {
            return out;
        }
        tokens.sort_unstable();
        for t in &tokens {
            let (dim, seed) = (self.dim, self.seed);
            let v = self
                .cache
                .entry(t.clone())
                .or_insert_with(|| token_vector(t, dim, seed));
            crate::tensor::axpy(1.0, v, &mut out);
        }
        let n = tokens.len() as f64;
        out.iter_mut().for_each(|x| *x /= n);
        let norm = crate::tensor::norm(&out);
        if norm > 0.0 {
            out.iter_mut().for_each(|x| *x /= norm);
        }
        out
    }

    pub fn encode_all<S: AsRef<str>>(&mut self, texts: &[S]) -> EmbeddingTable {
        let mut m = Matrix::zeros(texts.len(), self.dim);
        for (i, t) in texts.iter().enumerate() {
            let v = self.encode(t.as_ref());
            m.row_mut(i).copy_from_slice(&v);
        }
        EmbeddingTable::new(m).expect("fallback vectors are finite")
    }
}
