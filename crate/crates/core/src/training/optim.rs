use crate::error::{Error, Result};
use crate::training::model::ModelBundle;

pub const RMSPROP_RHO: f64 = 0.9;
pub const RMSPROP_EPS: f64 = 1e-8;

/// Bounds α is projected onto after every update.
pub const ALPHA_MIN: f64 = 1e-6;
pub const ALPHA_MAX: f64 = 1.0 - 1e-6;

/// `v ← ρv + (1−ρ)g²;  p ← p − lr·g/(√v + ε)`
#[derive(Clone, Debug)]
pub struct RmsProp {
    pub rho: f64,
    pub eps: f64,
    /// When false the leaky α slot is left untouched.
    pub update_alpha: bool,
    mean_square: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(model: &ModelBundle) -> Self {
        RmsProp {
            rho: RMSPROP_RHO,
            eps: RMSPROP_EPS,
            update_alpha: true,
            mean_square: model.arrays().iter().map(|a| vec![0.0; a.data.len()]).collect(),
        }
    }

    pub fn state(&self) -> &[Vec<f64>] {
        &self.mean_square
    }

    pub fn step(&mut self, model: &mut ModelBundle, grads: &ModelBundle, lr: f64) -> Result<()> {
        let grad_arrays = grads.arrays();
        let (rho, eps, update_alpha) = (self.rho, self.eps, self.update_alpha);
        let params = model.arrays_mut();
        if params.len() != grad_arrays.len() || params.len() != self.mean_square.len() {
            return Err(Error::Integrity("optimizer state does not match the model layout".into()));
        }
        // compute every update before touching parameters so a failure leaves them intact
        let mut updates = Vec::with_capacity(params.len());
        for (k, g) in grad_arrays.iter().enumerate() {
            let state = &mut self.mean_square[k];
            if state.len() != g.data.len() {
                return Err(Error::Integrity(format!("optimizer state for {} has wrong size", g.name)));
            }
            let mut delta = Vec::with_capacity(g.data.len());
            for (v, &gi) in state.iter_mut().zip(g.data) {
                *v = rho * *v + (1.0 - rho) * gi * gi;
                let d = lr * gi / (v.sqrt() + eps);
                if !d.is_finite() {
                    return Err(Error::Divergence { step: 0 });
                }
                delta.push(d);
            }
            updates.push(delta);
        }
        for ((name, data), delta) in params.into_iter().zip(updates) {
            if name == "alpha" {
                if update_alpha {
                    data[0] = (data[0] - delta[0]).clamp(ALPHA_MIN, ALPHA_MAX);
                }
                continue;
            }
            for (p, d) in data.iter_mut().zip(delta) {
                *p -= d;
            }
        }
        Ok(())
    }
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_global_norm(grads: &mut ModelBundle, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm.is_finite() {
        grads.scale(max_norm / norm);
    }
    norm
}

/// `base · 0.5^(number of milestones ≤ epoch)`, with `epoch` 0-based.
pub fn lr_at_epoch(base_lr: f64, epoch: usize, milestones: &[usize]) -> f64 {
    let halvings = milestones.iter().filter(|&&m| m <= epoch).count();
    base_lr * 0.5f64.powi(halvings as i32)
}
