//! AdamW with decoupled weight decay, and global-norm clipping.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { lr: 3e-4, weight_decay: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub cfg: AdamWConfig,
    pub step: u64,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, len: usize) -> AdamW {
        AdamW { cfg, step: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    /// One update. Weight decay shrinks the weights directly and never
    /// enters the moment estimates.
    pub fn update(&mut self, params: &mut [f32], grads: &[f32]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let c = self.cfg;
        let t = self.step as f64;
        let bc1 = 1.0 - libm::pow(c.beta1, t);
        let bc2 = 1.0 - libm::pow(c.beta2, t);
        let decay = (1.0 - c.lr * c.weight_decay) as f32;
        let (b1, b2) = (c.beta1 as f32, c.beta2 as f32);
        let step_size = (c.lr / bc1) as f32;
        let inv_bc2 = (1.0 / bc2) as f32;
        let eps = c.eps as f32;
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let denom = libm::sqrtf(self.v[i] * inv_bc2) + eps;
            params[i] = params[i] * decay - step_size * self.m[i] / denom;
        }
    }
}

/// Global L2 norm, accumulated in f64 in index order.
pub fn global_norm(grads: &[f32]) -> f64 {
    libm::sqrt(grads.iter().map(|&g| g as f64 * g as f64).sum())
}

/// Rescales `grads` so their global norm is at most `max_norm`.
/// Returns the pre-clip norm and the applied scale.
pub fn clip_global_norm(grads: &mut [f32], max_norm: f64) -> (f64, f64) {
    let norm = global_norm(grads);
    if norm <= max_norm || norm == 0.0 {
        return (norm, 1.0);
    }
    let scale = max_norm / norm;
    for g in grads.iter_mut() {
        *g = (*g as f64 * scale) as f32;
    }
    (norm, scale)
}
