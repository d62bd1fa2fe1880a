//! Adam with bias correction, the inverse-sqrt warmup schedule, and global
//! gradient-norm clipping.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::ParamSet;
use crate::train::TrainConfig;

/// lr(t) = base * min(t^-0.5, t * warmup^-1.5). A warmup of 0 disables the
/// schedule entirely (constant base rate).
pub fn learning_rate(t: usize, cfg: &TrainConfig) -> f64 {
    let t = t.max(1) as f64;
    if cfg.warmup == 0 {
        return cfg.base_lr;
    }
    let w = cfg.warmup as f64;
    cfg.base_lr * (t.powf(-0.5)).min(t * w.powf(-1.5))
}

/// First/second moment accumulators, parallel to the parameter entries.
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        AdamState {
            m: params.entries().map(|e| vec![0.0; e.data.len()]).collect(),
            v: params.entries().map(|e| vec![0.0; e.data.len()]).collect(),
        }
    }
}

/// One Adam update at step `t` (1-based). Gradients are looked up by
/// parameter name; missing entries count as zero. The global norm is clipped
/// to `cfg.clip_norm` before the update. Returns the learning rate used.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &HashMap<String, Vec<f64>>,
    state: &mut AdamState,
    t: usize,
    cfg: &TrainConfig,
) -> Result<f64> {
    if t < 1 {
        return Err(Error::contract("adam step index must be >= 1".to_string()));
    }
    let mut sq_norm = 0.0;
    for e in params.entries() {
        if let Some(g) = grads.get(&e.name) {
            if g.len() != e.data.len() {
                return Err(Error::Dim {
                    op: "adam_step",
                    lhs: e.shape.clone(),
                    rhs: vec![g.len()],
                });
            }
            for &gi in g {
                if !gi.is_finite() {
                    return Err(Error::numeric(format!(
                        "non-finite gradient for parameter {:?}",
                        e.name
                    )));
                }
                sq_norm += gi * gi;
            }
        }
    }
    let norm = sq_norm.sqrt();
    let clip_scale = if norm > cfg.clip_norm { cfg.clip_norm / norm } else { 1.0 };

    let lr = learning_rate(t, cfg);
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for (idx, e) in params.entries_mut().enumerate() {
        let zero;
        let g: &[f64] = match grads.get(&e.name) {
            Some(g) => g,
            None => {
                zero = vec![0.0; e.data.len()];
                &zero
            }
        };
        let m = &mut state.m[idx];
        let v = &mut state.v[idx];
        for i in 0..e.data.len() {
            let gi = g[i] * clip_scale;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            e.data[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(lr)
}
