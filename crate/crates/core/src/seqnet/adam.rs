//! Adam with bias correction and a trainable-parameter mask.

use super::params::ParameterStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
    trainable: Vec<bool>,
}

impl AdamState {
    /// Fresh moments for every parameter of `store`; all trainable.
    pub fn new(store: &ParameterStore, lr: f64) -> Result<Self> {
        let trainable = vec![true; store.len()];
        Self::with_mask(store, lr, trainable)
    }

    /// Fresh moments; parameters with `trainable[i] == false` are never touched.
    pub fn with_mask(store: &ParameterStore, lr: f64, trainable: Vec<bool>) -> Result<Self> {
        if !(lr > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate must be > 0, got {lr}")));
        }
        if trainable.len() != store.len() {
            return Err(Error::ShapeMismatch(format!("mask for {} of {} parameters", trainable.len(), store.len())));
        }
        let zeros: Vec<Vec<f64>> = store.ids().map(|id| vec![0.0; store.value(id).len()]).collect();
        Ok(Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: zeros.clone(), v: zeros, t: 0, trainable })
    }

    pub fn trainable(&self) -> &[bool] {
        &self.trainable
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update from the gradients held in `store`, then zeroes them.
    pub fn step(&mut self, store: &mut ParameterStore) {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if !self.trainable[id.0] {
                continue;
            }
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            let (w, g) = store.value_and_grad_mut(id);
            for k in 0..w.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                w[k] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        store.zero_grads();
        store.step += 1;
    }
}

/// Rescales the selected gradients so their joint L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParameterStore, max_norm: f64, trainable: Option<&[bool]>) -> f64 {
    let ids: Vec<_> = store.ids().filter(|id| trainable.is_none_or(|t| t[id.0])).collect();
    let norm = ids.iter().flat_map(|&id| store.grad(id).iter()).map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for id in ids {
            store.grad_mut(id).iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}
