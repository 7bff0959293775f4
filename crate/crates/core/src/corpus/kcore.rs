use super::{IdMap, Interaction, Interactions};
use crate::error::{Error, Result};

/// Iteratively drops users and items with fewer than `k` interactions until
/// every survivor has at least `k`. Survivors are re-indexed densely in order
/// of first appearance; record order is preserved.
pub fn kcore_filter(data: &Interactions, k: usize) -> Result<Interactions> {
    if k == 0 {
        return Err(Error::config("k_core", "k must be at least 1"));
    }
    let mut alive = vec![true; data.records.len()];
    loop {
        let mut user_count = vec![0usize; data.n_users()];
        let mut item_count = vec![0usize; data.n_items()];
        for (rec, _) in data.records.iter().zip(&alive).filter(|(_, a)| **a) {
            user_count[rec.user] += 1;
            item_count[rec.item] += 1;
        }
        let mut changed = false;
        for (rec, a) in data.records.iter().zip(alive.iter_mut()) {
            if *a && (user_count[rec.user] < k || item_count[rec.item] < k) {
                *a = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut out = Interactions {
        records: Vec::new(),
        users: IdMap::new(),
        items: IdMap::new(),
    };
    for (rec, _) in data.records.iter().zip(&alive).filter(|(_, a)| **a) {
        let user = out.users.intern(data.users.raw(rec.user));
        let item = out.items.intern(data.items.raw(rec.item));
        out.records.push(Interaction {
            user,
            item,
            timestamp: rec.timestamp,
        });
    }
    if out.records.is_empty() {
        return Err(Error::Data("k-core eliminated all data".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn build(rows: &[(&str, &str, i64)]) -> Interactions {
        let mut d = Interactions::default();
        for &(u, i, t) in rows {
            let user = d.users.intern(u);
            let item = d.items.intern(i);
            d.records.push(Interaction {
                user,
                item,
                timestamp: t,
            });
        }
        d
    }

    fn raw_set(d: &Interactions) -> BTreeSet<(String, String, i64)> {
        d.records
            .iter()
            .map(|r| {
                (
                    d.users.raw(r.user).to_string(),
                    d.items.raw(r.item).to_string(),
                    r.timestamp,
                )
            })
            .collect()
    }

    /// Removes one offending user or item at a time, rescanning from scratch.
    fn brute_force_core(rows: &[(String, String, i64)], k: usize) -> BTreeSet<(String, String, i64)> {
        let mut rows: Vec<_> = rows.to_vec();
        loop {
            let mut victim: Option<(bool, String)> = None;
            for (u, _, _) in &rows {
                if rows.iter().filter(|r| &r.0 == u).count() < k {
                    victim = Some((true, u.clone()));
                    break;
                }
            }
            if victim.is_none() {
                for (_, i, _) in &rows {
                    if rows.iter().filter(|r| &r.1 == i).count() < k {
                        victim = Some((false, i.clone()));
                        break;
                    }
                }
            }
            match victim {
                Some((true, u)) => rows.retain(|r| r.0 != u),
                Some((false, i)) => rows.retain(|r| r.1 != i),
                None => break,
            }
        }
        rows.into_iter().collect()
    }

    #[test]
    fn user_below_k_is_removed() {
        let mut rows = Vec::new();
        let names: Vec<String> = (0..6).map(|u| format!("u{u}")).collect();
        // five heavy users cover items a..e fully
        for u in &names[..5] {
            for i in ["a", "b", "c", "d", "e"] {
                rows.push((u.as_str(), i, 1));
            }
        }
        // light user with 4 interactions
        for i in ["a", "b", "c", "d"] {
            rows.push((names[5].as_str(), i, 2));
        }
        let d = build(&rows);
        let out = kcore_filter(&d, 5).unwrap();
        assert_eq!(out.n_users(), 5);
        assert!(out.users.get("u5").is_none());
        assert_eq!(out.records.len(), 25);
    }

    #[test]
    fn already_dense_is_identity() {
        let mut rows = Vec::new();
        for u in ["x", "y"] {
            for i in ["p", "q"] {
                rows.push((u, i, 3));
            }
        }
        let d = build(&rows);
        let out = kcore_filter(&d, 2).unwrap();
        assert_eq!(out.records, d.records);
    }

    #[test]
    fn cascade_removes_both() {
        // u2 has one interaction: dropping it leaves item "c" with one, which cascades.
        let d = build(&[
            ("u0", "a", 1),
            ("u0", "b", 1),
            ("u1", "a", 1),
            ("u1", "b", 1),
            ("u1", "c", 1),
            ("u2", "c", 1),
        ]);
        let out = kcore_filter(&d, 2).unwrap();
        assert!(out.users.get("u2").is_none());
        assert!(out.items.get("c").is_none());
        assert_eq!(out.records.len(), 4);
    }

    #[test]
    fn everything_removed_is_error() {
        let d = build(&[("u", "i", 1)]);
        let err = kcore_filter(&d, 2).unwrap_err();
        assert_eq!(err.to_string(), "k-core eliminated all data");
        assert!(kcore_filter(&d, 0).is_err());
    }

    proptest! {
        #[test]
        fn matches_fixpoint_oracle(
            edges in proptest::collection::vec((0u8..8, 0u8..8), 1..80),
            k in 1usize..4,
        ) {
            let rows: Vec<(String, String, i64)> = edges
                .iter()
                .enumerate()
                .map(|(t, (u, i))| (format!("u{u}"), format!("i{i}"), t as i64))
                .collect();
            let refs: Vec<(&str, &str, i64)> =
                rows.iter().map(|(u, i, t)| (u.as_str(), i.as_str(), *t)).collect();
            let d = build(&refs);
            let expected = brute_force_core(&rows, k);
            match kcore_filter(&d, k) {
                Ok(out) => {
                    prop_assert_eq!(raw_set(&out), expected);
                    let mut uc = vec![0; out.n_users()];
                    let mut ic = vec![0; out.n_items()];
                    for r in &out.records {
                        uc[r.user] += 1;
                        ic[r.item] += 1;
                    }
                    prop_assert!(uc.iter().chain(&ic).all(|&c| c >= k));
                }
                Err(_) => prop_assert!(expected.is_empty()),
            }
        }
    }
}
