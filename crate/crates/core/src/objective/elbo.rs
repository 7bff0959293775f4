//! Exact pseudo-likelihood and its variational lower bound, with the full
//! softmax over all items. Only tractable on small catalogues.

use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::{log_sum_exp, trilinear};
use crate::textembed::EmbeddingTable;

pub const ELBO_MAX_ITEMS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms {
    /// `sum_i sum_r q_i(r) [ln p(v_i | v_-i, r) + ln p_u(r)] + alpha H[q_i]`
    pub bound: f64,
    /// `sum_i ln sum_r p(v_i | v_-i, r) p_u(r)`
    pub pseudo_ll: f64,
}

/// `ln p(v | given, r)` for every item `v`, normalised over the catalogue.
pub fn reconstruction_log_probs(model: &Model, given: usize, r: usize) -> Result<Vec<f64>> {
    model.check_item(given)?;
    model.check_relation(r)?;
    let n = model.config.n_items;
    if n > ELBO_MAX_ITEMS {
        return Err(Error::Data(format!(
            "exact likelihood limited to {ELBO_MAX_ITEMS} items, catalogue has {n}"
        )));
    }
    let p = &model.params;
    let (rel, vg) = (p.rel_emb.row(r), p.item_emb.row(given));
    let scores: Vec<f64> = (0..n).map(|v| trilinear(p.item_emb.row(v), rel, vg)).collect();
    let lse = log_sum_exp(&scores);
    Ok(scores.into_iter().map(|s| s - lse).collect())
}

/// `ln p(v_i | v_-i, r)` for both directions `i = 1, 2` and all relations.
fn direction_log_probs(model: &Model, v1: usize, v2: usize) -> Result<[Vec<f64>; 2]> {
    let nr = model.config.num_relations();
    let mut out = [vec![0.0; nr], vec![0.0; nr]];
    for r in 0..nr {
        out[0][r] = reconstruction_log_probs(model, v2, r)?[v1];
        out[1][r] = reconstruction_log_probs(model, v1, r)?[v2];
    }
    Ok(out)
}

/// True posterior `p(r | v_i, v_-i)` under the uniform prior, for both directions.
pub fn exact_posterior(model: &Model, v1: usize, v2: usize) -> Result<[Vec<f64>; 2]> {
    let lp = direction_log_probs(model, v1, v2)?;
    Ok(lp.map(|l| {
        let lse = log_sum_exp(&l);
        l.iter().map(|x| (x - lse).exp()).collect()
    }))
}

/// Bound and pseudo-likelihood with the model's own classifier as `q`.
pub fn elbo_exact(model: &Model, text: Option<&EmbeddingTable>, v1: usize, v2: usize, alpha: f64) -> Result<ElboTerms> {
    let q1 = model.item_posterior(text, v1, v2)?.probs;
    let q2 = model.item_posterior(text, v2, v1)?.probs;
    elbo_exact_with_q(model, v1, v2, [&q1, &q2], alpha)
}

/// Bound and pseudo-likelihood for explicit posteriors `q[0] = q(r | v1, v2)`, `q[1] = q(r | v2, v1)`.
///
/// For `alpha = 1` the bound never exceeds the pseudo-likelihood and meets it
/// when each `q` is the exact posterior.
pub fn elbo_exact_with_q(model: &Model, v1: usize, v2: usize, q: [&[f64]; 2], alpha: f64) -> Result<ElboTerms> {
    let nr = model.config.num_relations();
    for qi in q {
        if qi.len() != nr {
            return Err(Error::Shape(format!("posterior has {} entries, |R| = {nr}", qi.len())));
        }
        if qi.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (qi.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Data("posterior is not a probability vector".into()));
        }
    }
    let log_prior = -(nr as f64).ln();
    let lp = direction_log_probs(model, v1, v2)?;
    let mut bound = 0.0;
    let mut pseudo_ll = 0.0;
    for (qi, li) in q.iter().zip(&lp) {
        for (&qr, &l) in qi.iter().zip(li) {
            if qr > 0.0 {
                bound += qr * (l + log_prior) - alpha * qr * qr.ln();
            }
        }
        pseudo_ll += log_sum_exp(li) + log_prior;
    }
    Ok(ElboTerms { bound, pseudo_ll })
}
