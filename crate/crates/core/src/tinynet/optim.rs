use super::ParamStore;
use crate::error::{Error, Result};

/// RMSProp without momentum or weight decay:
/// `v <- alpha v + (1 - alpha) g^2`, `p <- p - lr g / (sqrt(v) + eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub alpha: f64,
    pub eps: f64,
    second_moment: Vec<Vec<f64>>,
}

impl Default for OptimizerState {
    fn default() -> Self {
        Self::new(5e-4, 0.99)
    }
}

impl OptimizerState {
    pub fn new(learning_rate: f64, alpha: f64) -> Self {
        Self {
            learning_rate,
            alpha,
            eps: 1e-8,
            second_moment: Vec::new(),
        }
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }

    /// Applies one update and zeroes the gradients. A non-finite gradient
    /// rejects the whole update, leaving parameters untouched.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        let bad = store
            .iter()
            .find(|p| p.grad.iter().any(|g| !g.is_finite()))
            .map(|p| p.name.clone());
        if let Some(name) = bad {
            store.zero_grads();
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
        if self.second_moment.len() != store.len() {
            self.second_moment = store.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        let (lr, alpha, eps) = (self.learning_rate, self.alpha, self.eps);
        for (p, v) in store.iter_mut().zip(self.second_moment.iter_mut()) {
            for ((x, g), vk) in p.value.iter_mut().zip(p.grad.iter_mut()).zip(v.iter_mut()) {
                *vk = alpha * *vk + (1.0 - alpha) * *g * *g;
                *x -= lr * *g / (vk.sqrt() + eps);
                *g = 0.0;
            }
        }
        Ok(())
    }
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = store.grad_norm();
    if norm > max_norm && norm.is_finite() {
        store.scale_grads(max_norm / norm);
    }
    norm
}
