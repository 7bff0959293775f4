//! Sampled ranking: the held-out item against a fixed set of negatives.

mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{aggregate_seeds, MetricsReport, CSV_HEADER};

use crate::corpus::{sample_eval_negatives, seeded_rng, DatasetSplit, SplitKind};
use crate::error::{Error, Result};
use crate::model::Model;

pub const DEFAULT_NEGATIVES: usize = 99;

/// One user's ranking problem with frozen negatives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCase {
    pub user: usize,
    /// Most recent `max_len` items before the target.
    pub history: Vec<usize>,
    pub target: usize,
    pub negatives: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSet {
    pub split: SplitKind,
    pub num_negatives: usize,
    pub cases: Vec<EvalCase>,
    /// Users left out because their history was empty.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankResult {
    pub user: usize,
    /// 1 is best; ties count against the target.
    pub rank: usize,
    /// Target score first, then the negatives in order.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub hr5: f64,
    pub hr10: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
}

impl Metrics {
    pub fn from_rank(rank: usize) -> Self {
        // k = 5 and 10 are valid, so these cannot fail
        Metrics {
            hr5: hr_at_k(rank, 5).unwrap(),
            hr10: hr_at_k(rank, 10).unwrap(),
            ndcg5: ndcg_at_k(rank, 5).unwrap(),
            ndcg10: ndcg_at_k(rank, 10).unwrap(),
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.hr5, self.hr10, self.ndcg5, self.ndcg10]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Metrics {
            hr5: a[0],
            hr10: a[1],
            ndcg5: a[2],
            ndcg10: a[3],
        }
    }
}

/// `1 + #{negatives scoring >= target}`
pub fn rank_from_scores(target: f64, negatives: &[f64]) -> usize {
    1 + negatives.iter().filter(|&&s| s >= target).count()
}

pub fn hr_at_k(rank: usize, k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::config("k", "cutoff must be at least 1"));
    }
    if rank < 1 {
        return Err(Error::Data("rank must be at least 1".into()));
    }
    Ok(if rank <= k { 1.0 } else { 0.0 })
}

pub fn ndcg_at_k(rank: usize, k: usize) -> Result<f64> {
    Ok(if hr_at_k(rank, k)? > 0.0 {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    })
}

/// Ranks `target` among `negatives` for one user.
pub fn rank_target(
    model: &Model,
    user: usize,
    history: &[usize],
    target: usize,
    negatives: &[usize],
    expected_negatives: usize,
) -> Result<RankResult> {
    if negatives.len() != expected_negatives {
        return Err(Error::Data(format!(
            "user {user}: {} negatives, expected {expected_negatives}",
            negatives.len()
        )));
    }
    let mut candidates = Vec::with_capacity(negatives.len() + 1);
    candidates.push(target);
    candidates.extend_from_slice(negatives);
    let scores = model.score_candidates(user, history, &candidates)?;
    let rank = rank_from_scores(scores[0], &scores[1..]);
    Ok(RankResult { user, rank, scores })
}

/// Freezes the candidate sets for one split. Negatives avoid the user's whole
/// sequence and depend only on `(seed, user, split)`.
pub fn prepare_eval_set(
    split: &DatasetSplit,
    kind: SplitKind,
    n_items: usize,
    num_negatives: usize,
    max_len: usize,
    seed: u64,
) -> Result<EvalSet> {
    if max_len == 0 {
        return Err(Error::config("max_len", "must be at least 1"));
    }
    let mut cases = Vec::with_capacity(split.users.len());
    let mut skipped = 0;
    for u in &split.users {
        let (mut history, target) = match kind {
            SplitKind::Valid => (u.valid_history().to_vec(), u.valid),
            SplitKind::Test => (u.test_history(), u.test),
        };
        if history.is_empty() {
            skipped += 1;
            continue;
        }
        if history.len() > max_len {
            history.drain(..history.len() - max_len);
        }
        let mut seen = u.full_sequence();
        seen.sort_unstable();
        seen.dedup();
        let stream = ((u.user as u64) << 1) | matches!(kind, SplitKind::Test) as u64;
        let mut rng = seeded_rng(seed, stream);
        let negatives = sample_eval_negatives(n_items, &seen, num_negatives, &mut rng)?;
        cases.push(EvalCase {
            user: u.user,
            history,
            target,
            negatives,
        });
    }
    if skipped > 0 {
        log::warn!("{skipped} users without history skipped in the {} set", kind.as_str());
    }
    Ok(EvalSet {
        split: kind,
        num_negatives,
        cases,
        skipped,
    })
}

/// Per-user ranks in case order.
pub fn rank_all(model: &Model, set: &EvalSet) -> Result<Vec<usize>> {
    set.cases
        .par_iter()
        .map(|c| rank_target(model, c.user, &c.history, c.target, &c.negatives, set.num_negatives).map(|r| r.rank))
        .collect()
}

/// Uniform mean over users of HR/NDCG at 5 and 10.
pub fn evaluate(model: &Model, set: &EvalSet) -> Result<Metrics> {
    let ranks = rank_all(model, set)?;
    Ok(mean_metrics(&ranks))
}

pub fn mean_metrics(ranks: &[usize]) -> Metrics {
    if ranks.is_empty() {
        return Metrics::default();
    }
    let mut acc = [0.0; 4];
    for &r in ranks {
        for (a, v) in acc.iter_mut().zip(Metrics::from_rank(r).as_array()) {
            *a += v;
        }
    }
    let n = ranks.len() as f64;
    Metrics::from_array(acc.map(|a| a / n))
}
