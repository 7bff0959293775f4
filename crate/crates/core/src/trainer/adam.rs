use crate::error::{Error, Result};
use crate::model::ParamStore;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moments for every tensor, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub m: ParamStore,
    pub v: ParamStore,
    pub step: u64,
}

impl OptimState {
    pub fn new(params: &ParamStore) -> Self {
        OptimState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam step with `l2 * w` added to each gradient.
///
/// Entries whose regularised gradient is exactly zero keep their moments and
/// value, so embedding rows untouched by a batch are not moved by stale momentum.
pub fn adam_step(params: &mut ParamStore, grads: &ParamStore, state: &mut OptimState, lr: f64, l2: f64) -> Result<()> {
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - BETA1.powf(t);
    let c2 = 1.0 - BETA2.powf(t);
    let p_all = params.tensors_mut();
    let g_all = grads.tensors();
    let m_all = state.m.tensors_mut();
    let v_all = state.v.tensors_mut();
    for (((name, p), (_, g)), ((_, m), (_, v))) in p_all.into_iter().zip(g_all).zip(m_all.into_iter().zip(v_all)) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::Shape(format!(
                "`{name}`: parameter {:?}, gradient {:?}, moment {:?}",
                p.shape(),
                g.shape(),
                m.shape()
            )));
        }
        for i in 0..p.data.len() {
            let gi = g.data[i] + l2 * p.data[i];
            if gi == 0.0 {
                continue;
            }
            let mi = BETA1 * m.data[i] + (1.0 - BETA1) * gi;
            let vi = BETA2 * v.data[i] + (1.0 - BETA2) * gi * gi;
            m.data[i] = mi;
            v.data[i] = vi;
            let next = p.data[i] - lr * (mi / c1) / ((vi / c2).sqrt() + EPSILON);
            if !next.is_finite() {
                return Err(Error::NonFinite {
                    tensor: name.to_string(),
                    index: i,
                });
            }
            p.data[i] = next;
        }
    }
    Ok(())
}
