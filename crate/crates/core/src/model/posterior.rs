use std::collections::HashMap;

use super::{Model, ParamStore, PosteriorInput};
use crate::error::{Error, Result};
use crate::tensor::{axpy, log_sum_exp, Matrix};
use crate::textembed::{project, EmbeddingTable};

/// Categorical distribution over all relations, predefined and latent.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationPosterior {
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
}

impl RelationPosterior {
    pub fn from_logits(logits: &[f64]) -> Self {
        let lse = log_sum_exp(logits);
        let log_probs: Vec<f64> = logits.iter().map(|l| l - lse).collect();
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        RelationPosterior { probs, log_probs }
    }

    pub fn argmax(&self) -> usize {
        self.probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| {
                if p > best.1 {
                    (i, p)
                } else {
                    best
                }
            })
            .0
    }

    /// `-sum_r q_r ln q_r`
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .zip(&self.log_probs)
            .map(|(p, lp)| if *p > 0.0 { p * lp } else { 0.0 })
            .sum::<f64>()
    }
}

/// `softmax(W^T [e_i; e_j] + b)` for two `d`-dimensional item representations.
pub fn relation_posterior(e_i: &[f64], e_j: &[f64], params: &ParamStore) -> Result<RelationPosterior> {
    let d = params.cls_w.rows / 2;
    if e_i.len() != d || e_j.len() != d {
        return Err(Error::Shape(format!(
            "classifier expects two {d}-vectors, got {} and {}",
            e_i.len(),
            e_j.len()
        )));
    }
    if let Some(idx) = e_i.iter().chain(e_j).position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            tensor: "posterior input".into(),
            index: idx,
        });
    }
    let mut logits = params.cls_b.data.clone();
    for (k, &x) in e_i.iter().chain(e_j).enumerate() {
        axpy(x, params.cls_w.row(k), &mut logits);
    }
    Ok(RelationPosterior::from_logits(&logits))
}

/// Per-item halves of the classifier logits for a set of items.
///
/// The logit of pair `(i, j)` is `first[i] + second[j] + b`, so each item is
/// pushed through the projection and classifier once per batch.
#[derive(Debug, Clone)]
pub struct ItemLogits {
    pub items: Vec<usize>,
    slot: HashMap<usize, usize>,
    /// `n x |R|` contribution when the item is the first of the pair
    pub first: Matrix,
    /// `n x |R|` contribution when the item is the second of the pair
    pub second: Matrix,
}

impl ItemLogits {
    pub fn slot(&self, item: usize) -> usize {
        self.slot[&item]
    }

    pub fn pair_logits(&self, si: usize, sj: usize, bias: &[f64], out: &mut [f64]) {
        let (a, b) = (self.first.row(si), self.second.row(sj));
        for r in 0..out.len() {
            out[r] = a[r] + b[r] + bias[r];
        }
    }

    pub fn zeros_like(&self) -> (Matrix, Matrix) {
        (
            Matrix::zeros(self.first.rows, self.first.cols),
            Matrix::zeros(self.second.rows, self.second.cols),
        )
    }
}

impl Model {
    /// Projected text embedding `e` of one item.
    pub fn text_representation(&self, text: &EmbeddingTable, item: usize) -> Result<Vec<f64>> {
        self.check_item(item)?;
        if item >= text.len() {
            return Err(Error::Data(format!("no text embedding for item {item}")));
        }
        project(text.row(item), &self.params.projection)
    }

    /// Representation the classifier reads for `item` under the configured input.
    pub fn posterior_input(&self, text: Option<&EmbeddingTable>, item: usize) -> Result<Vec<f64>> {
        match self.config.posterior_input {
            PosteriorInput::Id => {
                self.check_item(item)?;
                Ok(self.params.item_emb.row(item).to_vec())
            }
            PosteriorInput::Text => {
                let text = text.ok_or_else(|| Error::Data("text embeddings required".into()))?;
                self.text_representation(text, item)
            }
        }
    }

    /// `q(r | item_i, item_j)`
    pub fn item_posterior(&self, text: Option<&EmbeddingTable>, item_i: usize, item_j: usize) -> Result<RelationPosterior> {
        let e_i = self.posterior_input(text, item_i)?;
        let e_j = self.posterior_input(text, item_j)?;
        relation_posterior(&e_i, &e_j, &self.params)
    }

    /// Classifier halves for the distinct items in `items`.
    pub fn item_logits(&self, text: Option<&EmbeddingTable>, items: &[usize]) -> Result<ItemLogits> {
        let p = &self.params;
        let d = self.config.d;
        let nr = p.num_relations();
        let mut uniq: Vec<usize> = items.to_vec();
        uniq.sort_unstable();
        uniq.dedup();
        let slot: HashMap<usize, usize> = uniq.iter().enumerate().map(|(s, &i)| (i, s)).collect();
        let mut first = Matrix::zeros(uniq.len(), nr);
        let mut second = Matrix::zeros(uniq.len(), nr);

        match self.config.posterior_input {
            PosteriorInput::Id => {
                for (s, &item) in uniq.iter().enumerate() {
                    let v = p.item_emb.row(item);
                    for k in 0..d {
                        axpy(v[k], p.cls_w.row(k), first.row_mut(s));
                        axpy(v[k], p.cls_w.row(d + k), second.row_mut(s));
                    }
                }
            }
            PosteriorInput::Text => {
                let text = text.ok_or_else(|| Error::Data("text embeddings required".into()))?;
                if text.dim() != self.config.d_text {
                    return Err(Error::Shape(format!(
                        "text embeddings have dimension {}, model expects {}",
                        text.dim(),
                        self.config.d_text
                    )));
                }
                let (ca, cb, const_a, const_b) = self.fused_classifier();
                for (s, &item) in uniq.iter().enumerate() {
                    let x = text.row(item);
                    let fa = first.row_mut(s);
                    fa.copy_from_slice(&const_a);
                    for (l, &xl) in x.iter().enumerate() {
                        if xl != 0.0 {
                            axpy(xl, ca.row(l), fa);
                        }
                    }
                    let fb = second.row_mut(s);
                    fb.copy_from_slice(&const_b);
                    for (l, &xl) in x.iter().enumerate() {
                        if xl != 0.0 {
                            axpy(xl, cb.row(l), fb);
                        }
                    }
                }
            }
        }
        Ok(ItemLogits {
            items: uniq,
            slot,
            first,
            second,
        })
    }

    /// `W1 * W2a`, `W1 * W2b` (each `d_L x |R|`) and `b1 * W2a`, `b1 * W2b`.
    fn fused_classifier(&self) -> (Matrix, Matrix, Vec<f64>, Vec<f64>) {
        let p = &self.params;
        let d = self.config.d;
        let nr = p.num_relations();
        let w1 = &p.projection.weight;
        let mut ca = Matrix::zeros(w1.rows, nr);
        let mut cb = Matrix::zeros(w1.rows, nr);
        for l in 0..w1.rows {
            let wl = w1.row(l);
            for k in 0..d {
                axpy(wl[k], p.cls_w.row(k), ca.row_mut(l));
                axpy(wl[k], p.cls_w.row(d + k), cb.row_mut(l));
            }
        }
        let b1 = p.projection.bias.row(0);
        let mut const_a = vec![0.0; nr];
        let mut const_b = vec![0.0; nr];
        for k in 0..d {
            axpy(b1[k], p.cls_w.row(k), &mut const_a);
            axpy(b1[k], p.cls_w.row(d + k), &mut const_b);
        }
        (ca, cb, const_a, const_b)
    }

    /// Back-propagates gradients of the per-item logit halves into the classifier,
    /// the projection (unless frozen) or the item embeddings.
    pub(crate) fn item_logits_backward(
        &self,
        text: Option<&EmbeddingTable>,
        cache: &ItemLogits,
        d_first: &Matrix,
        d_second: &Matrix,
        train_projection: bool,
        grads: &mut ParamStore,
    ) {
        let p = &self.params;
        let d = self.config.d;
        let nr = p.num_relations();
        match self.config.posterior_input {
            PosteriorInput::Id => {
                for (s, &item) in cache.items.iter().enumerate() {
                    let (ga, gb) = (d_first.row(s), d_second.row(s));
                    let v = p.item_emb.row(item);
                    for k in 0..d {
                        axpy(v[k], ga, grads.cls_w.row_mut(k));
                        axpy(v[k], gb, grads.cls_w.row_mut(d + k));
                    }
                    let gv = grads.item_emb.row_mut(item);
                    for k in 0..d {
                        gv[k] += crate::tensor::dot(p.cls_w.row(k), ga)
                            + crate::tensor::dot(p.cls_w.row(d + k), gb);
                    }
                }
            }
            PosteriorInput::Text => {
                let text = text.expect("text embeddings checked in forward");
                let dl = self.config.d_text;
                // G = sum_i x_i (outer) dz_i, S = sum_i dz_i
                let mut ga = Matrix::zeros(dl, nr);
                let mut gb = Matrix::zeros(dl, nr);
                let mut sa = vec![0.0; nr];
                let mut sb = vec![0.0; nr];
                for (s, &item) in cache.items.iter().enumerate() {
                    let (da, db) = (d_first.row(s), d_second.row(s));
                    axpy(1.0, da, &mut sa);
                    axpy(1.0, db, &mut sb);
                    for (l, &xl) in text.row(item).iter().enumerate() {
                        if xl != 0.0 {
                            axpy(xl, da, ga.row_mut(l));
                            axpy(xl, db, gb.row_mut(l));
                        }
                    }
                }
                let w1 = &p.projection.weight;
                let b1 = p.projection.bias.row(0);
                // dW2a = W1^T G_a + b1 (outer) S_a
                for l in 0..dl {
                    let wl = w1.row(l);
                    for k in 0..d {
                        axpy(wl[k], ga.row(l), grads.cls_w.row_mut(k));
                        axpy(wl[k], gb.row(l), grads.cls_w.row_mut(d + k));
                    }
                }
                for k in 0..d {
                    axpy(b1[k], &sa, grads.cls_w.row_mut(k));
                    axpy(b1[k], &sb, grads.cls_w.row_mut(d + k));
                }
                if train_projection {
                    // dW1 = G_a W2a^T + G_b W2b^T, db1 = W2a S_a + W2b S_b
                    for l in 0..dl {
                        let (gal, gbl) = (ga.row(l), gb.row(l));
                        let out = grads.projection.weight.row_mut(l);
                        for k in 0..d {
                            out[k] += crate::tensor::dot(gal, p.cls_w.row(k))
                                + crate::tensor::dot(gbl, p.cls_w.row(d + k));
                        }
                    }
                    let gb1 = grads.projection.bias.row_mut(0);
                    for k in 0..d {
                        gb1[k] += crate::tensor::dot(&sa, p.cls_w.row(k))
                            + crate::tensor::dot(&sb, p.cls_w.row(d + k));
                    }
                }
            }
        }
    }
}
