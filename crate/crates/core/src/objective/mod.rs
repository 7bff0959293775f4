//! Training losses and their gradients.
//!
//! ```text
//! l_rec = mean softplus(-(y_pos - y_neg))                                   (BPR)
//! l_kge = mean softplus(-(phi(h, r, t) - phi(h', r, t')))
//! c_r   = ln sig(phi(v_i, r, v_j)) + ln sig(-phi(v_i^-, r, v_j))
//! l_lrd = mean over pairs of -sum_r q_r c_r - alpha H[q]
//! total = l_rec + gamma l_kge + lambda l_lrd
//! ```

mod batch;
mod elbo;

use serde::{Deserialize, Serialize};

pub use batch::{sample_batch, Batch, Example, KgeSample, LrdPair, RecSample, SamplingConfig, TrainSequences};
pub use elbo::{elbo_exact, elbo_exact_with_q, exact_posterior, reconstruction_log_probs, ElboTerms, ELBO_MAX_ITEMS};

use crate::corpus::Triplet;
use crate::error::{Error, Result};
use crate::model::{Model, ParamStore, PosteriorInput, RelationPosterior};
use crate::tensor::{axpy, log_sigmoid, log_sum_exp, sigmoid, softplus, trilinear, Matrix};
use crate::textembed::EmbeddingTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub gamma: f64,
    pub lambda: f64,
    pub alpha: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [("gamma", self.gamma), ("lambda", self.lambda), ("alpha", self.alpha)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(key, format!("must be a finite non-negative number, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_rec: f64,
    pub l_kge: f64,
    pub l_lrd: f64,
    pub total: f64,
    /// Mean posterior entropy over relation-discovery pairs.
    pub mean_entropy: f64,
}

impl LossBreakdown {
    pub fn combine(l_rec: f64, l_kge: f64, l_lrd: f64, mean_entropy: f64, w: &LossWeights) -> Self {
        LossBreakdown {
            l_rec,
            l_kge,
            l_lrd,
            total: l_rec + w.gamma * l_kge + w.lambda * l_lrd,
            mean_entropy,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.l_rec, self.l_kge, self.l_lrd, self.total, self.mean_entropy]
            .iter()
            .all(|x| x.is_finite())
    }
}

/// `-ln sig(y_pos - y_neg)`
pub fn bpr_loss(y_pos: f64, y_neg: f64) -> f64 {
    softplus(-(y_pos - y_neg))
}

/// `-sum_r q_r ln q_r`, with `0 ln 0 = 0`.
pub fn entropy(q: &RelationPosterior) -> f64 {
    q.entropy()
}

/// `ln sig(phi(v_i, r, v_j)) + ln sig(-phi(v_i^-, r, v_j))` on item ID embeddings.
pub fn reconstruction_term(model: &Model, vi: usize, vj: usize, vi_neg: usize, r: usize) -> Result<f64> {
    for item in [vi, vj, vi_neg] {
        model.check_item(item)?;
    }
    model.check_relation(r)?;
    let p = &model.params;
    let rel = p.rel_emb.row(r);
    let (ei, ej, en) = (p.item_emb.row(vi), p.item_emb.row(vj), p.item_emb.row(vi_neg));
    Ok(log_sigmoid(trilinear(ei, rel, ej)) + log_sigmoid(-trilinear(en, rel, ej)))
}

/// `-ln sig(phi(true) - phi(corrupted))`
pub fn kge_loss(model: &Model, triplet: &Triplet, corrupted: &Triplet) -> Result<f64> {
    check_triplet(model, triplet)?;
    check_triplet(model, corrupted)?;
    let (pt, pc) = (kge_score(&model.params, triplet), kge_score(&model.params, corrupted));
    Ok(softplus(-(pt - pc)))
}

/// Loss of one pair and the posterior entropy behind it.
pub fn lrd_pair_loss(model: &Model, text: Option<&EmbeddingTable>, pair: &LrdPair, alpha: f64) -> Result<(f64, f64)> {
    let q = model.item_posterior(text, pair.history_item, pair.target)?;
    let mut expected = 0.0;
    for (r, &qr) in q.probs.iter().enumerate() {
        expected += qr * reconstruction_term(model, pair.history_item, pair.target, pair.negative, r)?;
    }
    let h = q.entropy();
    Ok((-expected - alpha * h, h))
}

/// Mean of [`lrd_pair_loss`] over `pairs` (0 for no pairs).
pub fn lrd_loss(model: &Model, text: Option<&EmbeddingTable>, pairs: &[LrdPair], alpha: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for pair in pairs {
        total += lrd_pair_loss(model, text, pair, alpha)?.0;
    }
    Ok(total / pairs.len() as f64)
}

/// Loss breakdown for a pre-sampled batch. Each term is a mean over its own samples.
pub fn joint_loss(model: &Model, text: Option<&EmbeddingTable>, batch: &Batch, w: &LossWeights) -> Result<LossBreakdown> {
    evaluate(model, text, batch, w, None)
}

/// Loss breakdown and the gradient of `total` with respect to every tensor.
///
/// With `train_projection = false` the projection gradient is left at zero.
pub fn joint_loss_and_grad(
    model: &Model,
    text: Option<&EmbeddingTable>,
    batch: &Batch,
    w: &LossWeights,
    train_projection: bool,
) -> Result<(LossBreakdown, ParamStore)> {
    let mut grads = model.params.zeros_like();
    let loss = evaluate(model, text, batch, w, Some((&mut grads, train_projection)))?;
    Ok((loss, grads))
}

fn check_triplet(model: &Model, t: &Triplet) -> Result<()> {
    model.check_item(t.head)?;
    model.check_item(t.tail)?;
    model.check_relation(t.relation)
}

fn check_batch(model: &Model, text: Option<&EmbeddingTable>, batch: &Batch) -> Result<()> {
    for s in &batch.rec {
        model.check_user(s.user)?;
        if s.history.is_empty() {
            return Err(Error::Data("training example with empty history".into()));
        }
        for &i in s.history.iter().chain([&s.pos, &s.neg]) {
            model.check_item(i)?;
        }
    }
    for p in &batch.lrd {
        for i in [p.history_item, p.target, p.negative] {
            model.check_item(i)?;
        }
    }
    for k in &batch.kge {
        check_triplet(model, &k.triplet)?;
        check_triplet(model, &k.corrupted)?;
    }
    if !batch.lrd.is_empty() && model.config.posterior_input == PosteriorInput::Text {
        let text = text.ok_or_else(|| Error::Data("text embeddings required".into()))?;
        if text.len() < model.config.n_items {
            return Err(Error::Data(format!(
                "{} text embeddings for {} items",
                text.len(),
                model.config.n_items
            )));
        }
    }
    Ok(())
}

fn kge_score(p: &ParamStore, t: &Triplet) -> f64 {
    trilinear(p.item_emb.row(t.head), p.rel_emb.row(t.relation), p.item_emb.row(t.tail))
}

/// Adds `g * d phi(a, r, b)` to the gradients of `a`, `r` and `b`.
fn distmult_backward(p: &ParamStore, a: usize, r: usize, b: usize, g: f64, grads: &mut ParamStore) {
    if g == 0.0 {
        return;
    }
    let (va, vr, vb) = (p.item_emb.row(a), p.rel_emb.row(r), p.item_emb.row(b));
    let d = va.len();
    for k in 0..d {
        grads.item_emb.data[a * d + k] += g * vr[k] * vb[k];
        grads.item_emb.data[b * d + k] += g * vr[k] * va[k];
        grads.rel_emb.data[r * d + k] += g * va[k] * vb[k];
    }
}

fn evaluate(
    model: &Model,
    text: Option<&EmbeddingTable>,
    batch: &Batch,
    w: &LossWeights,
    mut grad: Option<(&mut ParamStore, bool)>,
) -> Result<LossBreakdown> {
    w.validate()?;
    check_batch(model, text, batch)?;
    let p = &model.params;
    let keep_attention = grad.is_some();

    let mut l_rec = 0.0;
    if !batch.rec.is_empty() {
        let scale = 1.0 / batch.rec.len() as f64;
        for s in &batch.rec {
            let tp = model.score_forward(s.user, &s.history, s.pos, keep_attention);
            let tn = model.score_forward(s.user, &s.history, s.neg, keep_attention);
            let diff = tp.score - tn.score;
            l_rec += softplus(-diff);
            if let Some((g, _)) = grad.as_mut() {
                let dy = -sigmoid(-diff) * scale;
                model.score_backward(&tp, dy, g);
                model.score_backward(&tn, -dy, g);
            }
        }
        l_rec *= scale;
    }

    let mut l_kge = 0.0;
    if !batch.kge.is_empty() {
        let scale = 1.0 / batch.kge.len() as f64;
        for k in &batch.kge {
            let diff = kge_score(p, &k.triplet) - kge_score(p, &k.corrupted);
            l_kge += softplus(-diff);
            if let Some((g, _)) = grad.as_mut() {
                let dy = -sigmoid(-diff) * scale * w.gamma;
                let (t, c) = (k.triplet, k.corrupted);
                distmult_backward(p, t.head, t.relation, t.tail, dy, g);
                distmult_backward(p, c.head, c.relation, c.tail, -dy, g);
            }
        }
        l_kge *= scale;
    }

    let (mut l_lrd, mut mean_entropy) = (0.0, 0.0);
    if !batch.lrd.is_empty() {
        let scale = w.lambda / batch.lrd.len() as f64;
        let lrd_grad = match grad.as_mut() {
            Some((g, train_projection)) if w.lambda > 0.0 => Some((&mut **g, *train_projection, scale)),
            _ => None,
        };
        let (sum_loss, sum_entropy) = lrd_terms(model, text, &batch.lrd, w.alpha, lrd_grad)?;
        l_lrd = sum_loss / batch.lrd.len() as f64;
        mean_entropy = sum_entropy / batch.lrd.len() as f64;
    }

    Ok(LossBreakdown::combine(l_rec, l_kge, l_lrd, mean_entropy, w))
}

/// Summed pair losses and entropies, through the per-item logit cache.
fn lrd_terms(
    model: &Model,
    text: Option<&EmbeddingTable>,
    pairs: &[LrdPair],
    alpha: f64,
    mut grad: Option<(&mut ParamStore, bool, f64)>,
) -> Result<(f64, f64)> {
    let p = &model.params;
    let nr = p.num_relations();
    let items: Vec<usize> = pairs.iter().flat_map(|x| [x.history_item, x.target]).collect();
    let cache = model.item_logits(text, &items)?;
    let (mut d_first, mut d_second) = match grad {
        Some(_) => cache.zeros_like(),
        None => (Matrix::zeros(0, 0), Matrix::zeros(0, 0)),
    };

    let bias = p.cls_b.row(0);
    let mut logits = vec![0.0; nr];
    let mut log_q = vec![0.0; nr];
    let mut q = vec![0.0; nr];
    let mut phi_pos = vec![0.0; nr];
    let mut phi_neg = vec![0.0; nr];
    let mut dlogit = vec![0.0; nr];
    let (mut sum_loss, mut sum_entropy) = (0.0, 0.0);

    for pair in pairs {
        let (si, sj) = (cache.slot(pair.history_item), cache.slot(pair.target));
        cache.pair_logits(si, sj, bias, &mut logits);
        let lse = log_sum_exp(&logits);
        for r in 0..nr {
            log_q[r] = logits[r] - lse;
            q[r] = log_q[r].exp();
        }
        let (vi, vj, vn) = (
            p.item_emb.row(pair.history_item),
            p.item_emb.row(pair.target),
            p.item_emb.row(pair.negative),
        );
        let mut expected = 0.0;
        let mut h = 0.0;
        for r in 0..nr {
            let rel = p.rel_emb.row(r);
            phi_pos[r] = trilinear(vi, rel, vj);
            phi_neg[r] = trilinear(vn, rel, vj);
            let c = log_sigmoid(phi_pos[r]) + log_sigmoid(-phi_neg[r]);
            expected += q[r] * c;
            h -= q[r] * log_q[r];
            // d loss / d q_r, reusing the slot
            dlogit[r] = -c + alpha * (log_q[r] + 1.0);
        }
        sum_loss += -expected - alpha * h;
        sum_entropy += h;

        if let Some((g, _, scale)) = grad.as_mut() {
            let scale = *scale;
            let mean: f64 = q.iter().zip(&dlogit).map(|(a, b)| a * b).sum();
            for r in 0..nr {
                dlogit[r] = scale * q[r] * (dlogit[r] - mean);
            }
            axpy(1.0, &dlogit, d_first.row_mut(si));
            axpy(1.0, &dlogit, d_second.row_mut(sj));
            axpy(1.0, &dlogit, g.cls_b.row_mut(0));
            for r in 0..nr {
                let dc = -scale * q[r];
                let d_pos = dc * sigmoid(-phi_pos[r]);
                let d_neg = -dc * sigmoid(phi_neg[r]);
                distmult_backward(p, pair.history_item, r, pair.target, d_pos, g);
                distmult_backward(p, pair.negative, r, pair.target, d_neg, g);
            }
        }
    }

    if let Some((g, train_projection, _)) = grad {
        model.item_logits_backward(text, &cache, &d_first, &d_second, train_projection, g);
    }
    Ok((sum_loss, sum_entropy))
}
