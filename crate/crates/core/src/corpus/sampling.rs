use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type SeededRng = ChaCha8Rng;

/// Independent reproducible stream for `(seed, stream)`.
pub fn seeded_rng(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn excluded_in_range(n_items: usize, exclude: &[usize]) -> usize {
    debug_assert!(exclude.windows(2).all(|w| w[0] < w[1]), "exclude must be sorted");
    exclude.partition_point(|&i| i < n_items)
}

/// Uniform draw from `0..n_items` minus `exclude` (sorted, deduplicated).
pub fn sample_negative_item<R: Rng + ?Sized>(
    n_items: usize,
    exclude: &[usize],
    rng: &mut R,
) -> Result<usize> {
    let blocked = excluded_in_range(n_items, exclude);
    let eligible = n_items - blocked;
    if eligible == 0 {
        return Err(Error::Data(format!(
            "exclusion set covers all {n_items} items"
        )));
    }
    if blocked * 2 <= n_items {
        loop {
            let c = rng.random_range(0..n_items);
            if exclude.binary_search(&c).is_err() {
                return Ok(c);
            }
        }
    }
    // dense exclusion: pick the k-th eligible item directly
    let mut k = rng.random_range(0..eligible);
    let mut ex = exclude.iter().peekable();
    for item in 0..n_items {
        if ex.peek() == Some(&&item) {
            ex.next();
            continue;
        }
        if k == 0 {
            return Ok(item);
        }
        k -= 1;
    }
    unreachable!("eligible count is positive")
}

/// `n` distinct items outside `history` (sorted, deduplicated), in draw order.
pub fn sample_eval_negatives<R: Rng + ?Sized>(
    n_items: usize,
    history: &[usize],
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let blocked = excluded_in_range(n_items, history);
    let eligible = n_items - blocked;
    if eligible < n {
        return Err(Error::Data(format!(
            "need {n} negatives but only {eligible} of {n_items} items are outside a history of {}",
            history.len()
        )));
    }
    if eligible <= 4 * n {
        let pool: Vec<usize> = (0..n_items)
            .filter(|i| history.binary_search(i).is_err())
            .collect();
        return Ok(index::sample(rng, pool.len(), n)
            .into_iter()
            .map(|k| pool[k])
            .collect());
    }
    let mut chosen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let c = rng.random_range(0..n_items);
        if history.binary_search(&c).is_err() && chosen.insert(c) {
            out.push(c);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_items_one_excluded() {
        let mut rng = seeded_rng(1, 0);
        for _ in 0..100 {
            assert_eq!(sample_negative_item(2, &[0], &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn full_exclusion_errors() {
        let mut rng = seeded_rng(1, 0);
        assert!(sample_negative_item(3, &[0, 1, 2], &mut rng).is_err());
        assert!(sample_negative_item(0, &[], &mut rng).is_err());
    }

    #[test]
    fn uniform_within_three_sigma() {
        let mut rng = seeded_rng(7, 3);
        let draws = 100_000;
        let mut counts = [0usize; 10];
        for _ in 0..draws {
            counts[sample_negative_item(10, &[], &mut rng).unwrap()] += 1;
        }
        let expected = draws as f64 / 10.0;
        let sigma = (draws as f64 * 0.1 * 0.9).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn eval_negatives_basic() {
        let history: Vec<usize> = (0..20).map(|i| i * 7).collect();
        let mut rng = seeded_rng(5, 42);
        let neg = sample_eval_negatives(1349, &history, 99, &mut rng).unwrap();
        assert_eq!(neg.len(), 99);
        let set: HashSet<_> = neg.iter().collect();
        assert_eq!(set.len(), 99);
        assert!(neg.iter().all(|i| history.binary_search(i).is_err() && *i < 1349));

        let again = sample_eval_negatives(1349, &history, 99, &mut seeded_rng(5, 42)).unwrap();
        assert_eq!(neg, again);
    }

    #[test]
    fn eval_negatives_single_remaining() {
        let history: Vec<usize> = vec![0, 1, 2, 4];
        let mut rng = seeded_rng(0, 0);
        assert_eq!(sample_eval_negatives(5, &history, 1, &mut rng).unwrap(), vec![3]);
        assert!(sample_eval_negatives(5, &history, 2, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn never_returns_excluded(
            n_items in 2usize..60,
            raw in proptest::collection::btree_set(0usize..60, 0..59),
            seed in any::<u64>(),
        ) {
            let exclude: Vec<usize> = raw.into_iter().filter(|&i| i < n_items).collect();
            prop_assume!(exclude.len() < n_items);
            let mut rng = seeded_rng(seed, 0);
            for _ in 0..20 {
                let c = sample_negative_item(n_items, &exclude, &mut rng).unwrap();
                prop_assert!(c < n_items);
                prop_assert!(exclude.binary_search(&c).is_err());
            }
            let eligible = n_items - exclude.len();
            let k = eligible.min(5);
            let negs = sample_eval_negatives(n_items, &exclude, k, &mut rng).unwrap();
            prop_assert!(negs.iter().all(|c| exclude.binary_search(c).is_err()));
        }
    }
}
