use serde::{Deserialize, Serialize};

use super::params::NetworkParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators and the number of steps taken.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of a flat parameter slice.
pub fn adam_update(values: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig) {
    assert_eq!(values.len(), grads.len());
    assert_eq!(values.len(), state.m.len());
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((x, &g), m), v) in values.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *x -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// Adam step on network parameters; `grads` must have the same shape.
pub fn adam_step(params: &mut NetworkParams, grads: &NetworkParams, state: &mut AdamState, cfg: &AdamConfig) {
    let mut flat = params.to_flat();
    let g = grads.to_flat();
    adam_update(&mut flat, &g, state, cfg);
    for (dst, src) in params.values_mut().zip(flat) {
        *dst = src;
    }
}
