//! Global-norm gradient clipping and Adam.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::bptt::Gradients;
use crate::math::sqrt;
use crate::rnn::NetworkParams;

/// Scales `g` by `v/‖g‖` when the global norm exceeds `v`; returns the
/// norm before clipping.
pub fn clip_gradients(g: &mut Gradients, v: f64) -> f64 {
    assert!(v > 0.0, "clip norm must be positive");
    let norm = g.global_norm();
    if norm > v {
        g.scale(v / norm);
    }
    norm
}

/// Slice form of [`clip_gradients`].
pub fn clip_slice(g: &mut [f64], v: f64) -> f64 {
    assert!(v > 0.0, "clip norm must be positive");
    let norm = sqrt(g.iter().map(|x| x * x).sum());
    if norm > v {
        let s = v / norm;
        g.iter_mut().for_each(|x| *x *= s);
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First/second moments over the flattened parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(param_count: usize, hyper: AdamHyper) -> Self {
        Self { m: vec![0.0; param_count], v: vec![0.0; param_count], t: 0, hyper }
    }

    pub fn for_params(params: &NetworkParams, hyper: AdamHyper) -> Self {
        Self::new(params.param_count(), hyper)
    }

    /// One bias-corrected update of `params` in place.
    pub fn step_slice(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len(), "adam state does not mirror parameters");
        assert_eq!(grads.len(), self.m.len(), "gradient length");
        self.t += 1;
        let AdamHyper { beta1, beta2, epsilon } = self.hyper;
        let bc1 = 1.0 - libm::pow(beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(beta2, self.t as f64);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (sqrt(v_hat) + epsilon);
        }
    }
}

/// Adam update of a network given gradients of the same layout.
pub fn adam_step(state: &mut AdamState, params: &mut NetworkParams, grads: &Gradients, lr: f64) {
    let g = grads.to_flat();
    let mut flat = params.to_flat();
    state.step_slice(&mut flat, &g, lr);
    params.load_flat(&flat).expect("layout preserved");
}
