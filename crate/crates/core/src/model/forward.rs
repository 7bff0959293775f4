use super::{Aggregation, Model, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, softmax_into, trilinear, Matrix};

/// `sum_k vi[k] * r[k] * vj[k]`
pub fn distmult(vi: &[f64], r: &[f64], vj: &[f64]) -> Result<f64> {
    if vi.len() != r.len() || r.len() != vj.len() {
        return Err(Error::Shape(format!(
            "distmult operands have lengths {}, {}, {}",
            vi.len(),
            r.len(),
            vj.len()
        )));
    }
    Ok(trilinear(vi, r, vj))
}

/// Pools per-relation sequence representations into one vector.
pub fn aggregate(reprs: &[Vec<f64>], mode: Aggregation, params: &ParamStore) -> Result<Vec<f64>> {
    let d = reprs.first().map(Vec::len).ok_or_else(|| {
        Error::Shape("aggregate needs at least one representation".into())
    })?;
    if reprs.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("representations differ in length".into()));
    }
    if mode == Aggregation::Attention && params.att_w.shape() != (d, d) {
        return Err(Error::Shape(format!(
            "attention weights are {:?}, representations have dimension {d}",
            params.att_w.shape()
        )));
    }
    let flat = Matrix::from_rows(reprs);
    let mut out = vec![0.0; d];
    aggregate_into(&flat, mode, params, &mut out, None);
    Ok(out)
}

/// Intermediates of attention pooling kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub(crate) struct AttentionTrace {
    /// `|R| x d` tanh activations
    pub t: Vec<f64>,
    /// pooling weights
    pub beta: Vec<f64>,
}

fn aggregate_into(
    s: &Matrix,
    mode: Aggregation,
    params: &ParamStore,
    out: &mut [f64],
    trace: Option<&mut AttentionTrace>,
) {
    let (nr, d) = s.shape();
    out.iter_mut().for_each(|x| *x = 0.0);
    match mode {
        Aggregation::Mean => {
            let w = 1.0 / nr as f64;
            for r in 0..nr {
                axpy(w, s.row(r), out);
            }
        }
        Aggregation::Attention => {
            let mut t = vec![0.0; nr * d];
            let mut scores = vec![0.0; nr];
            let v = params.att_v.row(0);
            for r in 0..nr {
                let sr = s.row(r);
                let tr = &mut t[r * d..(r + 1) * d];
                for (p, tp) in tr.iter_mut().enumerate() {
                    *tp = dot(params.att_w.row(p), sr).tanh();
                }
                scores[r] = dot(v, tr);
            }
            let mut beta = vec![0.0; nr];
            softmax_into(&scores, &mut beta);
            for r in 0..nr {
                axpy(beta[r], s.row(r), out);
            }
            if let Some(tr) = trace {
                tr.t = t;
                tr.beta = beta;
            }
        }
    }
}

/// Everything the backward pass of one preference score needs.
#[derive(Debug, Clone)]
pub struct ScoreTrace {
    pub user: usize,
    pub target: usize,
    pub history: Vec<usize>,
    /// `|R| x n` relation intensities
    pub omega: Matrix,
    /// `|R| x d` relation-conditioned sequence representations
    pub seq: Matrix,
    /// aggregated representation
    pub m: Vec<f64>,
    pub score: f64,
    pub(crate) attention: AttentionTrace,
}

impl Model {
    fn check_history(&self, history: &[usize]) -> Result<()> {
        if history.is_empty() {
            return Err(Error::Data("empty history".into()));
        }
        history.iter().try_for_each(|&h| self.check_item(h))
    }

    /// Softmax over the history of `phi(v_h, r, v_target)`.
    pub fn relation_intensity(&self, history: &[usize], target: usize, r: usize) -> Result<Vec<f64>> {
        self.check_history(history)?;
        self.check_item(target)?;
        self.check_relation(r)?;
        let p = &self.params;
        let vj = p.item_emb.row(target);
        let rel = p.rel_emb.row(r);
        let phi: Vec<f64> = history
            .iter()
            .map(|&h| trilinear(p.item_emb.row(h), rel, vj))
            .collect();
        let mut w = vec![0.0; phi.len()];
        softmax_into(&phi, &mut w);
        Ok(w)
    }

    /// `s_r = sum_i w_{r,i} v_{h_i}`
    pub fn relation_sequence_repr(&self, history: &[usize], target: usize, r: usize) -> Result<Vec<f64>> {
        let w = self.relation_intensity(history, target, r)?;
        let mut s = vec![0.0; self.config.d];
        for (&h, &wi) in history.iter().zip(&w) {
            axpy(wi, self.params.item_emb.row(h), &mut s);
        }
        Ok(s)
    }

    /// `y = (u + m) . v_target + b_target`
    pub fn preference_score(&self, user: usize, history: &[usize], target: usize) -> Result<f64> {
        self.check_user(user)?;
        self.check_history(history)?;
        self.check_item(target)?;
        Ok(self.score_unchecked(user, history, target))
    }

    /// Scores several candidates against one history.
    pub fn score_candidates(&self, user: usize, history: &[usize], candidates: &[usize]) -> Result<Vec<f64>> {
        self.check_user(user)?;
        self.check_history(history)?;
        candidates.iter().try_for_each(|&c| self.check_item(c))?;
        Ok(candidates
            .iter()
            .map(|&c| self.score_unchecked(user, history, c))
            .collect())
    }

    pub(crate) fn score_unchecked(&self, user: usize, history: &[usize], target: usize) -> f64 {
        self.score_forward(user, history, target, false).score
    }

    /// Forward pass with intermediates. Indices must be valid and `history` non-empty.
    pub(crate) fn score_forward(&self, user: usize, history: &[usize], target: usize, keep_attention: bool) -> ScoreTrace {
        let p = &self.params;
        let d = self.config.d;
        let nr = p.num_relations();
        let n = history.len();
        let vj = p.item_emb.row(target);

        // elementwise products v_h * v_j, shared by all relations
        let mut prod = vec![0.0; n * d];
        for (i, &h) in history.iter().enumerate() {
            let vh = p.item_emb.row(h);
            for k in 0..d {
                prod[i * d + k] = vh[k] * vj[k];
            }
        }

        let mut omega = Matrix::zeros(nr, n);
        let mut seq = Matrix::zeros(nr, d);
        let mut phi = vec![0.0; n];
        for r in 0..nr {
            let rel = p.rel_emb.row(r);
            for i in 0..n {
                phi[i] = dot(&prod[i * d..(i + 1) * d], rel);
            }
            softmax_into(&phi, omega.row_mut(r));
            let sr = seq.row_mut(r);
            for (i, &h) in history.iter().enumerate() {
                axpy(omega.get(r, i), p.item_emb.row(h), sr);
            }
        }

        let mut m = vec![0.0; d];
        let mut attention = AttentionTrace::default();
        aggregate_into(
            &seq,
            self.config.agg,
            p,
            &mut m,
            keep_attention.then_some(&mut attention),
        );
        let u = p.user_emb.row(user);
        let score = dot(u, vj) + dot(&m, vj) + p.item_bias.data[target];
        ScoreTrace {
            user,
            target,
            history: history.to_vec(),
            omega,
            seq,
            m,
            score,
            attention,
        }
    }

    /// Accumulates `dy * d(score)/d(params)` into `grads`.
    pub(crate) fn score_backward(&self, trace: &ScoreTrace, dy: f64, grads: &mut ParamStore) {
        let p = &self.params;
        let d = self.config.d;
        let nr = p.num_relations();
        let n = trace.history.len();
        let j = trace.target;
        let vj = p.item_emb.row(j);
        let u = p.user_emb.row(trace.user);

        axpy(dy, vj, grads.user_emb.row_mut(trace.user));
        {
            let gj = grads.item_emb.row_mut(j);
            axpy(dy, u, gj);
            axpy(dy, &trace.m, gj);
        }
        grads.item_bias.data[j] += dy;

        // d score / d m = dy * v_j
        let dm: Vec<f64> = vj.iter().map(|x| dy * x).collect();
        let mut ds = Matrix::zeros(nr, d);
        match self.config.agg {
            Aggregation::Mean => {
                let w = 1.0 / nr as f64;
                for r in 0..nr {
                    axpy(w, &dm, ds.row_mut(r));
                }
            }
            Aggregation::Attention => {
                let AttentionTrace { t, beta } = &trace.attention;
                debug_assert_eq!(beta.len(), nr, "attention trace missing");
                let dbeta: Vec<f64> = (0..nr).map(|r| dot(&dm, trace.seq.row(r))).collect();
                let mean_dbeta: f64 = beta.iter().zip(&dbeta).map(|(b, g)| b * g).sum();
                let v = p.att_v.row(0);
                for r in 0..nr {
                    let sr = trace.seq.row(r);
                    let tr = &t[r * d..(r + 1) * d];
                    axpy(beta[r], &dm, ds.row_mut(r));
                    let da = beta[r] * (dbeta[r] - mean_dbeta);
                    axpy(da, tr, grads.att_v.row_mut(0));
                    for q in 0..d {
                        let dz = da * v[q] * (1.0 - tr[q] * tr[q]);
                        if dz == 0.0 {
                            continue;
                        }
                        axpy(dz, sr, grads.att_w.row_mut(q));
                        axpy(dz, p.att_w.row(q), ds.row_mut(r));
                    }
                }
            }
        }

        let mut dvj = vec![0.0; d];
        let mut domega = vec![0.0; n];
        for r in 0..nr {
            let dsr = ds.row(r);
            let rel = p.rel_emb.row(r);
            let w = trace.omega.row(r);
            for (i, &h) in trace.history.iter().enumerate() {
                domega[i] = dot(dsr, p.item_emb.row(h));
            }
            let mean: f64 = w.iter().zip(&domega).map(|(a, b)| a * b).sum();
            for (i, &h) in trace.history.iter().enumerate() {
                let dphi = w[i] * (domega[i] - mean);
                let vh = p.item_emb.row(h);
                {
                    let gh = grads.item_emb.row_mut(h);
                    axpy(w[i], dsr, gh);
                    for k in 0..d {
                        gh[k] += dphi * rel[k] * vj[k];
                    }
                }
                let gr = grads.rel_emb.row_mut(r);
                for k in 0..d {
                    gr[k] += dphi * vh[k] * vj[k];
                    dvj[k] += dphi * rel[k] * vh[k];
                }
            }
        }
        axpy(1.0, &dvj, grads.item_emb.row_mut(j));
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;
    use crate::tensor::softmax;
    use proptest::prelude::*;

    #[test]
    fn distmult_examples() {
        assert_eq!(distmult(&[1.0, 2.0], &[1.0, 1.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert_eq!(distmult(&[1.0, 2.0], &[0.0, 0.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert!(distmult(&[1.0], &[1.0, 1.0], &[1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn distmult_symmetric(v in proptest::collection::vec(-3.0f64..3.0, 24)) {
            let (a, rest) = v.split_at(8);
            let (r, b) = rest.split_at(8);
            let x = distmult(a, r, b).unwrap();
            let y = distmult(b, r, a).unwrap();
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn distmult_symmetric_thousand_draws() {
        let model = random_model(tiny_config(Aggregation::Mean), 5);
        let p = &model.params;
        for t in 0..1000 {
            let (i, j, r) = (t % 10, (t * 7 + 3) % 10, t % 3);
            let a = distmult(p.item_emb.row(i), p.rel_emb.row(r), p.item_emb.row(j)).unwrap();
            let b = distmult(p.item_emb.row(j), p.rel_emb.row(r), p.item_emb.row(i)).unwrap();
            assert!((a - b).abs() <= 1e-12);
        }
    }

    fn model_with_items(items: &[[f64; 2]], rel: &[[f64; 2]]) -> Model {
        let mut cfg = tiny_config(Aggregation::Mean);
        cfg.d = 2;
        cfg.n_items = items.len();
        cfg.num_predefined = rel.len();
        cfg.num_latent = 0;
        let mut m = Model::new(cfg, &mut crate::corpus::seeded_rng(0, 0)).unwrap();
        m.params.item_emb = Matrix::from_rows(&items.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
        m.params.rel_emb = Matrix::from_rows(&rel.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
        m
    }

    #[test]
    fn intensity_examples() {
        let m = model_with_items(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], &[[1.0, 1.0]]);
        assert_eq!(m.relation_intensity(&[0], 2, 0).unwrap(), vec![1.0]);
        // phi(0 -> 2) = 1 and phi(1 -> 2) = 1
        assert_eq!(m.relation_intensity(&[0, 1], 2, 0).unwrap(), vec![0.5, 0.5]);
        // phi = [ln 2, 0]
        let ln2 = std::f64::consts::LN_2;
        let m = model_with_items(&[[ln2, 0.0], [0.0, 0.0], [1.0, 1.0]], &[[1.0, 1.0]]);
        let w = m.relation_intensity(&[0, 1], 2, 0).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-9 && (w[1] - 1.0 / 3.0).abs() < 1e-9);
        assert!(m.relation_intensity(&[], 2, 0).is_err());
    }

    #[test]
    fn sequence_repr_examples() {
        let m = model_with_items(&[[0.3, -0.7], [2.0, 1.0]], &[[0.5, 1.5]]);
        assert_eq!(m.relation_sequence_repr(&[0], 1, 0).unwrap(), vec![0.3, -0.7]);
        let s = m.relation_sequence_repr(&[0, 0], 1, 0).unwrap();
        assert!((s[0] - 0.3).abs() < 1e-15 && (s[1] + 0.7).abs() < 1e-15);
    }

    #[test]
    fn sequence_repr_matches_weighted_sum() {
        let m = random_model(tiny_config(Aggregation::Mean), 3);
        let hist = [1, 4, 4, 7];
        for r in 0..3 {
            let p = &m.params;
            let phi: Vec<f64> = hist
                .iter()
                .map(|&h| (0..4).map(|k| p.item_emb.get(h, k) * p.rel_emb.get(r, k) * p.item_emb.get(2, k)).sum())
                .collect();
            let w = softmax(&phi);
            let s = m.relation_sequence_repr(&hist, 2, r).unwrap();
            for k in 0..4 {
                let expect: f64 = hist.iter().zip(&w).map(|(&h, wi)| wi * p.item_emb.get(h, k)).sum();
                assert!((s[k] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn aggregate_examples() {
        let m = random_model(tiny_config(Aggregation::Attention), 1);
        let same = vec![vec![0.1, 0.2, 0.3, 0.4]; 3];
        for mode in [Aggregation::Mean, Aggregation::Attention] {
            let out = aggregate(&same, mode, &m.params).unwrap();
            for (a, b) in out.iter().zip(&same[0]) {
                assert!((a - b).abs() < 1e-15);
            }
        }
        let out = aggregate(&[vec![1.0, 0.0], vec![0.0, 1.0]], Aggregation::Mean, &m.params).unwrap();
        assert_eq!(out, vec![0.5, 0.5]);
        assert!(aggregate(&[], Aggregation::Mean, &m.params).is_err());
    }

    proptest! {
        #[test]
        fn attention_stays_in_hull(seed in any::<u64>(), reprs in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 4), 1..6)) {
            let m = random_model(tiny_config(Aggregation::Attention), seed);
            let out = aggregate(&reprs, Aggregation::Attention, &m.params).unwrap();
            for k in 0..4 {
                let lo = reprs.iter().map(|r| r[k]).fold(f64::INFINITY, f64::min);
                let hi = reprs.iter().map(|r| r[k]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(out[k] >= lo - 1e-12 && out[k] <= hi + 1e-12);
            }
        }

        #[test]
        fn aggregation_is_permutation_invariant(seed in any::<u64>(), reprs in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 4), 2..6)) {
            let m = random_model(tiny_config(Aggregation::Attention), seed);
            let mut rev = reprs.clone();
            rev.reverse();
            for mode in [Aggregation::Mean, Aggregation::Attention] {
                let a = aggregate(&reprs, mode, &m.params).unwrap();
                let b = aggregate(&rev, mode, &m.params).unwrap();
                for k in 0..4 {
                    prop_assert!((a[k] - b[k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn preference_score_examples() {
        let mut m = model_with_items(&[[0.0, 0.0], [2.0, 3.0]], &[[0.0, 0.0]]);
        m.params.user_emb.fill(0.0);
        m.params.item_bias.data[1] = 1.5;
        // history item is the zero vector, so m = 0
        assert_eq!(m.preference_score(0, &[0], 1).unwrap(), 1.5);

        // u=[1,0], m=[0,1] (history of one item equal to [0,1]), v_j=[2,3]
        let mut m = model_with_items(&[[0.0, 1.0], [2.0, 3.0]], &[[1.0, 1.0]]);
        m.params.user_emb.row_mut(0).copy_from_slice(&[1.0, 0.0]);
        m.params.item_bias.fill(0.0);
        assert_eq!(m.preference_score(0, &[0], 1).unwrap(), 5.0);
        assert!(m.preference_score(0, &[], 1).is_err());
        assert!(m.preference_score(99, &[0], 1).is_err());
    }

    /// Scores from scratch: intensities -> sequence reprs -> pooling -> dot product.
    fn pipeline_oracle(m: &Model, user: usize, hist: &[usize], target: usize) -> f64 {
        let reprs: Vec<Vec<f64>> = (0..m.config.num_relations())
            .map(|r| m.relation_sequence_repr(hist, target, r).unwrap())
            .collect();
        let agg = aggregate(&reprs, m.config.agg, &m.params).unwrap();
        let p = &m.params;
        (0..m.config.d)
            .map(|k| (p.user_emb.get(user, k) + agg[k]) * p.item_emb.get(target, k))
            .sum::<f64>()
            + p.item_bias.data[target]
    }

    #[test]
    fn preference_score_matches_pipeline() {
        for (seed, agg) in [(1, Aggregation::Mean), (2, Aggregation::Attention), (3, Aggregation::Attention)] {
            let m = random_model(tiny_config(agg), seed);
            for (user, hist, target) in [(0, vec![1, 2, 3], 4), (2, vec![9], 0), (1, vec![5, 5, 6, 7, 8], 5)] {
                let a = m.preference_score(user, &hist, target).unwrap();
                let b = pipeline_oracle(&m, user, &hist, target);
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }
}
