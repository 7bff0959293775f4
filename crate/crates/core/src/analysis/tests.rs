use super::*;
use crate::corpus::UserSplit;
use crate::evaluation::rank_target;
use crate::model::distmult;
use crate::model::test_support::{random_model, tiny_config};
use crate::model::Aggregation;
use proptest::prelude::*;

fn model(seed: u64) -> Model {
    random_model(tiny_config(Aggregation::Mean), seed)
}

fn case(model: &Model) -> EvalCase {
    assert_eq!(model.config.n_items, 10);
    EvalCase {
        user: 1,
        history: vec![2, 5, 7],
        target: 3,
        negatives: vec![0, 1, 4, 6, 8, 9],
    }
}

#[test]
fn similarity_of_identical_and_orthogonal_relations() {
    let mut m = model(1);
    m.params.rel_emb = Matrix::from_rows(&[vec![1.0, 2.0, 0.0, 0.0], vec![1.0, 2.0, 0.0, 0.0], vec![0.0, 0.0, 3.0, -1.0]]);
    let s = relation_similarity(&m.params).unwrap();
    assert!((s.get(0, 1) - 1.0).abs() < 1e-12);
    assert_eq!(s.get(0, 2), 0.0);
    assert_eq!(s.get(1, 1), 1.0);
}

#[test]
fn similarity_matches_normalised_gram() {
    for seed in 0..5 {
        let m = model(seed);
        let s = relation_similarity(&m.params).unwrap();
        let rel = &m.params.rel_emb;
        let unit: Vec<Vec<f64>> = (0..rel.rows)
            .map(|r| {
                let n = rel.row(r).iter().map(|x| x * x).sum::<f64>().sqrt();
                rel.row(r).iter().map(|x| x / n).collect()
            })
            .collect();
        for a in 0..rel.rows {
            for b in 0..rel.rows {
                let g: f64 = unit[a].iter().zip(&unit[b]).map(|(x, y)| x * y).sum();
                assert!((s.get(a, b) - g).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn zero_norm_relation_is_named() {
    let mut m = model(2);
    m.params.rel_emb.row_mut(2).fill(0.0);
    let err = relation_similarity(&m.params).unwrap_err().to_string();
    assert!(err.contains("relation 2"), "{err}");
}

#[test]
fn similarity_csv_layout() {
    let s = relation_similarity(&model(3).params).unwrap();
    let names: Vec<String> = ["genre", "latent_0", "latent_1"].map(String::from).to_vec();
    let csv = s.to_csv(&names);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "relation,genre,latent_0,latent_1");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("genre,1.000000,"));
}

proptest! {
    #[test]
    fn similarity_is_symmetric_with_unit_diagonal(seed in 0u64..500) {
        let s = relation_similarity(&model(seed).params).unwrap();
        for a in 0..s.len() {
            prop_assert!((s.get(a, a) - 1.0).abs() <= 1e-6);
            for b in 0..s.len() {
                prop_assert_eq!(s.get(a, b), s.get(b, a));
                prop_assert!((-1.0..=1.0).contains(&s.get(a, b)));
            }
        }
    }
}

fn pool() -> Vec<(usize, usize)> {
    vec![(0, 1), (2, 3), (4, 5), (6, 7), (1, 9), (9, 1), (3, 3)]
}

#[test]
fn whole_pool_comes_back_sorted() {
    let m = model(4);
    let ex = top_pairs(&m, 1, &pool(), 100).unwrap();
    assert_eq!(ex.pairs.len(), pool().len());
    assert!(ex.pairs.windows(2).all(|w| w[0].score >= w[1].score));
}

#[test]
fn top_one_matches_linear_scan() {
    for seed in 0..10 {
        let m = model(seed);
        let all = all_item_pairs(10).unwrap();
        for r in 0..3 {
            let ex = top_pairs(&m, r, &all, 1).unwrap();
            let mut best = (f64::NEG_INFINITY, (0, 0));
            for &(i, j) in &all {
                let s = distmult(m.params.item_emb.row(i), m.params.rel_emb.row(r), m.params.item_emb.row(j)).unwrap();
                if s > best.0 {
                    best = (s, (i, j));
                }
            }
            assert_eq!((ex.pairs[0].item_i, ex.pairs[0].item_j), best.1);
            assert_eq!(ex.pairs[0].score, best.0);
        }
    }
}

#[test]
fn equal_scores_fall_back_to_id_order() {
    let mut m = model(5);
    m.params.item_emb.fill(0.5);
    let shuffled = vec![(4, 1), (0, 9), (4, 0), (2, 2), (0, 3)];
    let ex = top_pairs(&m, 0, &shuffled, 10).unwrap();
    let ids: Vec<(usize, usize)> = ex.pairs.iter().map(|p| (p.item_i, p.item_j)).collect();
    assert_eq!(ids, vec![(0, 3), (0, 9), (2, 2), (4, 0), (4, 1)]);
}

#[test]
fn bad_pools_are_rejected() {
    let m = model(6);
    assert!(top_pairs(&m, 0, &[], 3).is_err());
    assert!(top_pairs(&m, 3, &pool(), 3).is_err());
    assert!(top_pairs(&m, 0, &[(0, 10)], 3).is_err());
    assert!(all_item_pairs(5000).is_err());
    assert_eq!(all_item_pairs(3).unwrap().len(), 6);
}

#[test]
fn window_pairs_follow_the_history_window() {
    let split = DatasetSplit {
        users: vec![UserSplit { user: 0, train: vec![4, 1, 4, 2], valid: 7, test: 8 }],
        excluded: 0,
    };
    // positions 1..4 with max_len 2: (4->1), (4,1 -> 4), (1,4 -> 2)
    let pairs = training_window_pairs(&split, 2).unwrap();
    assert_eq!(pairs, vec![(1, 2), (1, 4), (4, 1), (4, 2)]);
}

#[test]
fn case_scores_match_distmult() {
    let m = model(7);
    let c = case(&m);
    let t = case_trace(&m, &c).unwrap();
    assert_eq!(t.history.len(), 3);
    for h in &t.history {
        assert_eq!(h.scores.len(), 3);
        for (r, &s) in h.scores.iter().enumerate() {
            let want = distmult(m.params.item_emb.row(h.item), m.params.rel_emb.row(r), m.params.item_emb.row(c.target)).unwrap();
            assert!((s - want).abs() < 1e-12);
        }
        let max = h.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(h.scores[h.argmax], max);
    }
    let r = rank_target(&m, c.user, &c.history, c.target, &c.negatives, c.negatives.len()).unwrap();
    assert_eq!(t.target_rank, r.rank);
}

#[test]
fn single_relation_is_always_the_argmax() {
    let mut cfg = tiny_config(Aggregation::Mean);
    cfg.num_latent = 0;
    let m = random_model(cfg, 8);
    let t = case_trace(&m, &case(&m)).unwrap();
    assert!(t.history.iter().all(|h| h.argmax == 0 && h.scores.len() == 1));
}

#[test]
fn argmax_ignores_item_bias() {
    let m = model(9);
    let mut shifted = m.clone();
    shifted.params.item_bias.data.iter_mut().for_each(|b| *b += 3.7);
    let a = case_trace(&m, &case(&m)).unwrap();
    let b = case_trace(&shifted, &case(&m)).unwrap();
    let am: Vec<usize> = a.history.iter().map(|h| h.argmax).collect();
    let bm: Vec<usize> = b.history.iter().map(|h| h.argmax).collect();
    assert_eq!(am, bm);
}

#[test]
fn empty_history_is_rejected() {
    let m = model(10);
    let c = EvalCase { history: vec![], ..case(&m) };
    assert!(case_trace(&m, &c).is_err());
}

proptest! {
    #[test]
    fn argmax_survives_positive_rescaling(seed in 0u64..200, c in 0.01f64..50.0) {
        let m = model(seed);
        let mut scaled = m.clone();
        scaled.params.rel_emb.data.iter_mut().for_each(|x| *x *= c);
        let a = case_trace(&m, &case(&m)).unwrap();
        let b = case_trace(&scaled, &case(&m)).unwrap();
        for (x, y) in a.history.iter().zip(&b.history) {
            prop_assert_eq!(x.argmax, y.argmax);
        }
    }
}

#[test]
fn one_by_one_grid_runs_each_seed_once() {
    let mut calls = Vec::new();
    let res = sweep(&[5], &[1.0], &[1, 2], |nl, l, s| {
        calls.push((nl, l, s));
        Ok(0.25 * s as f64)
    })
    .unwrap();
    assert_eq!(calls, vec![(5, 1.0, 1), (5, 1.0, 2)]);
    assert_eq!(res.cells.len(), 1);
    assert_eq!(res.cells[0].mean, Some(0.375));
}

#[test]
fn marginal_means_match_cell_table() {
    let nl = [5, 6, 7];
    let lam = [0.1, 1.0, 5.0, 10.0];
    let f = |n: usize, l: f64, s: u64| (n as f64) * 0.01 + l * 0.001 + s as f64 * 1e-4;
    let res = sweep(&nl, &lam, &[1, 2, 3], |n, l, s| Ok(f(n, l, s))).unwrap();
    assert_eq!(res.cells.len(), 12);
    let cell = |n: usize, l: f64| (1..=3).map(|s| f(n, l, s)).sum::<f64>() / 3.0;
    for &(n, m) in &res.by_num_latent {
        let want = lam.iter().map(|&l| cell(n, l)).sum::<f64>() / lam.len() as f64;
        assert!((m.unwrap() - want).abs() < 1e-12);
    }
    for &(l, m) in &res.by_lambda {
        let want = nl.iter().map(|&n| cell(n, l)).sum::<f64>() / nl.len() as f64;
        assert!((m.unwrap() - want).abs() < 1e-12);
    }
    assert_eq!(res.cells_csv().lines().count(), 13);
    assert_eq!(res.marginals_csv().lines().count(), 1 + 3 + 4);
}

#[test]
fn failing_cell_is_recorded_and_sweep_continues() {
    let res = sweep(&[5, 6], &[1.0], &[1], |n, _, _| {
        if n == 5 {
            Err(Error::Data("boom".into()))
        } else {
            Ok(0.5)
        }
    })
    .unwrap();
    assert!(res.cells[0].error.as_deref().unwrap().contains("boom"));
    assert_eq!(res.cells[0].mean, None);
    assert_eq!(res.cells[1].mean, Some(0.5));
    assert_eq!(res.by_lambda[0].1, Some(0.5));
    assert!(res.cells_csv().contains("failed"));
    assert!(sweep(&[], &[1.0], &[1], |_, _, _| Ok(0.0)).is_err());
}
