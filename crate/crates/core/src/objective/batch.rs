use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{history_window, sample_negative_item, DatasetSplit, Triplet};
use crate::error::{Error, Result};

/// One BPR example: a history window, its next item and a sampled negative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecSample {
    pub user: usize,
    pub history: Vec<usize>,
    pub pos: usize,
    pub neg: usize,
}

/// A (history item, target item) pair for relation discovery plus a corrupted history item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LrdPair {
    pub history_item: usize,
    pub target: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KgeSample {
    pub triplet: Triplet,
    pub corrupted: Triplet,
}

/// Pre-sampled mini-batch. All randomness is drawn here so loss evaluation is pure.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub rec: Vec<RecSample>,
    pub lrd: Vec<LrdPair>,
    pub kge: Vec<KgeSample>,
}

impl Batch {
    pub fn is_empty(&self) -> bool {
        self.rec.is_empty() && self.lrd.is_empty() && self.kge.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub max_len: usize,
    /// Replace both endpoints of a KGE triplet instead of one.
    pub corrupt_both: bool,
    /// Cap on relation-discovery pairs per example (`None` uses the whole window).
    pub lrd_pairs_per_example: Option<usize>,
    pub sample_lrd: bool,
    pub sample_kge: bool,
}

/// Training prefixes of every user in a split.
#[derive(Debug, Clone)]
pub struct TrainSequences {
    pub users: Vec<usize>,
    pub items: Vec<Vec<usize>>,
    /// Sorted, deduplicated copy of `items`, the BPR exclusion set.
    pub seen: Vec<Vec<usize>>,
}

/// `(sequence index, target position)` with `position >= 1`.
pub type Example = (usize, usize);

impl TrainSequences {
    pub fn from_split(split: &DatasetSplit) -> Self {
        let users = split.users.iter().map(|u| u.user).collect();
        let items: Vec<Vec<usize>> = split.users.iter().map(|u| u.train.clone()).collect();
        let seen = items
            .iter()
            .map(|s| {
                let mut v = s.clone();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect();
        TrainSequences { users, items, seen }
    }

    /// Every target position with a non-empty history.
    pub fn examples(&self) -> Vec<Example> {
        self.items
            .iter()
            .enumerate()
            .flat_map(|(s, items)| (1..items.len()).map(move |p| (s, p)))
            .collect()
    }
}

fn corrupt<R: Rng + ?Sized>(t: Triplet, n_items: usize, both: bool, rng: &mut R) -> Result<Triplet> {
    let mut c = t;
    let (head, tail) = if both { (true, true) } else { let h = rng.random_bool(0.5); (h, !h) };
    if head {
        c.head = sample_negative_item(n_items, &[t.head], rng)?;
    }
    if tail {
        c.tail = sample_negative_item(n_items, &[t.tail], rng)?;
    }
    Ok(c)
}

/// Draws negatives for `examples` and `examples.len()` random KGE triplets.
pub fn sample_batch<R: Rng + ?Sized>(
    examples: &[Example],
    seqs: &TrainSequences,
    triplets: &[Triplet],
    n_items: usize,
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<Batch> {
    let mut batch = Batch::default();
    for &(s, pos) in examples {
        let items = seqs
            .items
            .get(s)
            .ok_or_else(|| Error::Data(format!("sequence {s} out of range")))?;
        let history = history_window(items, pos, cfg.max_len)?;
        let target = items[pos];
        let neg = sample_negative_item(n_items, &seqs.seen[s], rng)?;
        if cfg.sample_lrd {
            let chosen: Vec<usize> = match cfg.lrd_pairs_per_example {
                Some(k) if k < history.len() => rand::seq::index::sample(rng, history.len(), k)
                    .into_iter()
                    .map(|i| history[i])
                    .collect(),
                _ => history.to_vec(),
            };
            for vi in chosen {
                batch.lrd.push(LrdPair {
                    history_item: vi,
                    target,
                    negative: sample_negative_item(n_items, &[vi], rng)?,
                });
            }
        }
        batch.rec.push(RecSample {
            user: seqs.users[s],
            history: history.to_vec(),
            pos: target,
            neg,
        });
    }
    if cfg.sample_kge && !triplets.is_empty() {
        for _ in 0..examples.len() {
            let t = triplets[rng.random_range(0..triplets.len())];
            batch.kge.push(KgeSample {
                triplet: t,
                corrupted: corrupt(t, n_items, cfg.corrupt_both, rng)?,
            });
        }
    }
    Ok(batch)
}
