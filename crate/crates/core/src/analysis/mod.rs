//! Post-hoc inspection of a trained model: relation similarity, exemplar item
//! pairs per relation, per-user relation traces and hyperparameter sweeps.

mod sweep;

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use sweep::{sweep, SweepCell, SweepResult, SWEEP_CSV_HEADER};

use crate::corpus::{history_window, DatasetSplit};
use crate::error::{Error, Result};
use crate::evaluation::{rank_target, EvalCase};
use crate::model::{Model, ParamStore};
use crate::tensor::{dot, norm, trilinear, Matrix};

/// Upper bound on `|V|^2` for scoring every ordered item pair.
pub const FULL_POOL_LIMIT: usize = 4_000_000;

/// Cosine similarity between every pair of relation embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub values: Matrix,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.values.rows
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows == 0
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values.get(a, b)
    }

    /// Header row of relation names, then one row per relation.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("relation");
        for n in names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (a, name) in names.iter().enumerate().take(self.len()) {
            out.push_str(name);
            for b in 0..self.len() {
                out.push_str(&format!(",{:.6}", self.get(a, b)));
            }
            out.push('\n');
        }
        out
    }
}

pub fn relation_similarity(params: &ParamStore) -> Result<SimilarityMatrix> {
    let rel = &params.rel_emb;
    let norms: Vec<f64> = (0..rel.rows).map(|r| norm(rel.row(r))).collect();
    if let Some(r) = norms.iter().position(|&n| n == 0.0 || !n.is_finite()) {
        return Err(Error::Data(format!("relation {r} has a zero-norm or non-finite embedding")));
    }
    let mut values = Matrix::zeros(rel.rows, rel.rows);
    for a in 0..rel.rows {
        values.set(a, a, 1.0);
        for b in a + 1..rel.rows {
            let c = (dot(rel.row(a), rel.row(b)) / (norms[a] * norms[b])).clamp(-1.0, 1.0);
            values.set(a, b, c);
            values.set(b, a, c);
        }
    }
    Ok(SimilarityMatrix { values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub item_i: usize,
    pub item_j: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationExemplars {
    pub relation: usize,
    /// Highest score first; ties in `(item_i, item_j)` order.
    pub pairs: Vec<ScoredPair>,
}

fn by_score_then_id(a: &ScoredPair, b: &ScoredPair) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.item_i.cmp(&b.item_i))
        .then(a.item_j.cmp(&b.item_j))
}

/// The `n` candidate pairs with the highest `phi(v_i, r, v_j)`.
pub fn top_pairs(model: &Model, relation: usize, candidates: &[(usize, usize)], n: usize) -> Result<RelationExemplars> {
    if candidates.is_empty() {
        return Err(Error::Data("candidate pool is empty".into()));
    }
    let p = &model.params;
    if relation >= p.rel_emb.rows {
        return Err(Error::Data(format!("relation {relation} out of range (|R| = {})", p.rel_emb.rows)));
    }
    if let Some(&(i, j)) = candidates.iter().find(|(i, j)| *i >= p.item_emb.rows || *j >= p.item_emb.rows) {
        return Err(Error::Data(format!("candidate pair ({i}, {j}) references an unknown item")));
    }
    let r = p.rel_emb.row(relation);
    let mut pairs: Vec<ScoredPair> = candidates
        .iter()
        .map(|&(i, j)| ScoredPair {
            item_i: i,
            item_j: j,
            score: trilinear(p.item_emb.row(i), r, p.item_emb.row(j)),
        })
        .collect();
    pairs.sort_by(by_score_then_id);
    pairs.truncate(n);
    Ok(RelationExemplars { relation, pairs })
}

/// Distinct `(history item, target)` pairs seen in training windows, sorted.
pub fn training_window_pairs(split: &DatasetSplit, max_len: usize) -> Result<Vec<(usize, usize)>> {
    let mut set = BTreeSet::new();
    for u in &split.users {
        for pos in 1..u.train.len() {
            let target = u.train[pos];
            for &h in history_window(&u.train, pos, max_len)? {
                if h != target {
                    set.insert((h, target));
                }
            }
        }
    }
    Ok(set.into_iter().collect())
}

/// Every ordered pair of distinct items, refused above [`FULL_POOL_LIMIT`].
pub fn all_item_pairs(n_items: usize) -> Result<Vec<(usize, usize)>> {
    if n_items.saturating_mul(n_items) > FULL_POOL_LIMIT {
        return Err(Error::config(
            "pool",
            format!("{n_items} items give more than {FULL_POOL_LIMIT} pairs; use the training-window pool"),
        ));
    }
    Ok((0..n_items)
        .flat_map(|i| (0..n_items).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRelation {
    pub item: usize,
    /// `phi(v_item, r, v_target)` for every relation.
    pub scores: Vec<f64>,
    pub argmax: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseTrace {
    pub user: usize,
    pub target: usize,
    pub history: Vec<HistoryRelation>,
    /// Rank among the case's negatives, 1 is best.
    pub target_rank: usize,
}

/// Predicted relation of each history item towards the target, plus the target's rank.
pub fn case_trace(model: &Model, case: &EvalCase) -> Result<CaseTrace> {
    if case.history.is_empty() {
        return Err(Error::Data(format!("user {} has no history", case.user)));
    }
    let ranked = rank_target(model, case.user, &case.history, case.target, &case.negatives, case.negatives.len())?;
    let p = &model.params;
    let vt = p.item_emb.row(case.target);
    let history = case
        .history
        .iter()
        .map(|&h| {
            let vh = p.item_emb.row(h);
            let scores: Vec<f64> = (0..p.rel_emb.rows).map(|r| trilinear(vh, p.rel_emb.row(r), vt)).collect();
            // first maximum wins
            let argmax = scores
                .iter()
                .enumerate()
                .fold(0, |best, (r, &s)| if s > scores[best] { r } else { best });
            HistoryRelation { item: h, scores, argmax }
        })
        .collect();
    Ok(CaseTrace {
        user: case.user,
        target: case.target,
        history,
        target_rank: ranked.rank,
    })
}

/// Traces for several cases in parallel, in input order.
pub fn case_traces(model: &Model, cases: &[EvalCase]) -> Result<Vec<CaseTrace>> {
    cases.par_iter().map(|c| case_trace(model, c)).collect()
}

#[cfg(test)]
mod tests;
