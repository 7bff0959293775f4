use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{IdMap, Triplet};

/// Links every pair of distinct items that share at least one attribute value.
/// Each linked pair is emitted in both directions, sorted by `(head, tail)`.
///
/// With `max_per_item`, each item keeps an evenly strided subset of its sorted
/// neighbour list before symmetrisation, so items can end up with slightly more
/// than the cap.
pub fn build_attribute_triplets(
    item_attributes: &BTreeMap<usize, Vec<String>>,
    relation: usize,
    max_per_item: Option<usize>,
) -> Vec<Triplet> {
    let mut by_value: HashMap<&str, Vec<usize>> = HashMap::new();
    for (&item, values) in item_attributes {
        let unique: BTreeSet<&str> = values.iter().map(String::as_str).collect();
        for v in unique {
            by_value.entry(v).or_default().push(item);
        }
    }

    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (&item, values) in item_attributes {
        let mut neighbours: BTreeSet<usize> = BTreeSet::new();
        for v in values {
            if let Some(items) = by_value.get(v.as_str()) {
                neighbours.extend(items.iter().copied().filter(|&j| j != item));
            }
        }
        let neighbours: Vec<usize> = neighbours.into_iter().collect();
        let kept: Vec<usize> = match max_per_item {
            Some(cap) if neighbours.len() > cap => {
                let stride = neighbours.len() as f64 / cap as f64;
                (0..cap)
                    .map(|k| neighbours[(k as f64 * stride) as usize])
                    .collect()
            }
            _ => neighbours,
        };
        for j in kept {
            pairs.insert((item, j));
            pairs.insert((j, item));
        }
    }

    pairs
        .into_iter()
        .map(|(head, tail)| Triplet {
            head,
            tail,
            relation,
        })
        .collect()
}

/// Maps raw item-ID pairs to deduplicated triplets in first-seen order.
/// Returns the triplets and the number of pairs dropped because an endpoint is
/// not in `items` or the pair is a self-loop.
pub fn build_cooccurrence_triplets<'a>(
    pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    items: &IdMap,
    relation: usize,
) -> (Vec<Triplet>, usize) {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut dropped = 0;
    for (a, b) in pairs {
        match (items.get(a), items.get(b)) {
            (Some(head), Some(tail)) if head != tail => {
                if seen.insert((head, tail)) {
                    out.push(Triplet {
                        head,
                        tail,
                        relation,
                    });
                }
            }
            _ => dropped += 1,
        }
    }
    (out, dropped)
}
