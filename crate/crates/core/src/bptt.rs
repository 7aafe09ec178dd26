//! Full-length backpropagation through time for a single sequence.

use crate::cells::{CellParams, StepCache};
use crate::diagnostics::{GradProfile, ProfileMeta};
use crate::error::{check_dim, Error, Result};
use crate::head::ClassifierHead;
use crate::math::Vector;

/// States `h_0..h_T` and the per-step caches that produced them.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub caches: Vec<StepCache>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.caches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.caches.is_empty()
    }

    pub fn final_state(&self) -> &Vector {
        self.states.last().expect("trajectory always holds h_0")
    }

    pub fn inputs(&self) -> impl Iterator<Item = &Vector> {
        self.caches.iter().map(StepCache::x)
    }

    /// Re-runs every cached step and checks it lands on the recorded state
    /// bit for bit.
    pub fn verify(&self, params: &CellParams) -> Result<()> {
        self.check_shape()?;
        for (t, cache) in self.caches.iter().enumerate() {
            let (h, replay) = params.step(cache.h_prev(), cache.x())?;
            if h != self.states[t + 1] || &replay != cache {
                return Err(Error::Integrity(format!("replay differs at step {}", t + 1)));
            }
        }
        Ok(())
    }

    fn check_shape(&self) -> Result<()> {
        if self.states.len() != self.caches.len() + 1 {
            return Err(Error::Integrity(format!(
                "{} states for {} steps",
                self.states.len(),
                self.caches.len()
            )));
        }
        for (t, cache) in self.caches.iter().enumerate() {
            if cache.h_prev() != &self.states[t] {
                return Err(Error::Integrity(format!(
                    "cache {} does not start from recorded state",
                    t + 1
                )));
            }
        }
        Ok(())
    }
}

/// Gradients of a scalar loss attached to `h_T`.
#[derive(Clone, Debug)]
pub struct Gradients {
    /// Same layout as the cell parameters (α slot holds `∂L/∂α`).
    pub params: CellParams,
    /// `∂L/∂x_t` for `t = 1..=T` (index 0 is `x_1`).
    pub input_grads: Vec<Vector>,
    /// `∂L/∂h_t` for `t = 0..=T`.
    pub state_grads: Vec<Vector>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.params.arrays().iter().all(|a| a.data.iter().all(|v| v.is_finite()))
            && self.input_grads.iter().all(Vector::is_finite)
            && self.state_grads.iter().all(Vector::is_finite)
    }
}

pub fn forward_sequence(params: &CellParams, h0: &Vector, xs: &[Vector]) -> Result<Trajectory> {
    params.validate()?;
    check_dim("forward_sequence: h0", params.hidden_dim(), h0.len())?;
    let d = params.input_dim();
    let mut states = Vec::with_capacity(xs.len() + 1);
    let mut caches = Vec::with_capacity(xs.len());
    states.push(h0.clone());
    for (t, x) in xs.iter().enumerate() {
        check_dim("forward_sequence: x_t", d, x.len())?;
        let (h, cache) = params.step(&states[t], x)?;
        if !h.is_finite() {
            return Err(Error::Divergence { step: t + 1 });
        }
        states.push(h);
        caches.push(cache);
    }
    Ok(Trajectory { states, caches })
}

pub fn backward_sequence(
    params: &CellParams,
    traj: &Trajectory,
    dl_dh_final: &Vector,
) -> Result<Gradients> {
    traj.check_shape()?;
    check_dim("backward_sequence: dL/dh_T", params.hidden_dim(), dl_dh_final.len())?;
    let steps = traj.len();
    let mut grads = params.zeros_like();
    let mut state_grads = vec![Vector::default(); steps + 1];
    let mut input_grads = vec![Vector::default(); steps];
    let mut g = dl_dh_final.clone();
    for t in (0..steps).rev() {
        let (g_prev, dx) = params.step_backward(&traj.caches[t], &g, &mut grads)?;
        state_grads[t + 1] = g;
        input_grads[t] = dx;
        if !g_prev.is_finite() {
            return Err(Error::Divergence { step: t });
        }
        g = g_prev;
    }
    state_grads[0] = g;
    Ok(Gradients {
        params: grads,
        input_grads,
        state_grads,
    })
}

/// `‖∂L/∂x_t‖₂` for `t = 1..=T`, with a cross-entropy loss on the final state.
pub fn input_gradient_norms(
    params: &CellParams,
    traj: &Trajectory,
    head: &ClassifierHead,
    target: usize,
) -> Result<GradProfile> {
    let out = head.loss_and_grad(traj.final_state(), target)?;
    let grads = backward_sequence(params, traj, &out.dl_dh)?;
    let norms = grads.input_grads.iter().map(Vector::norm).collect();
    Ok(GradProfile::new(
        norms,
        ProfileMeta::for_cell(params.kind(), params.rate_r()),
    ))
}

/// Adds `src` into `dst` elementwise; both must share a layout.
pub fn accumulate_params(dst: &mut CellParams, src: &CellParams) {
    for ((_, d), s) in dst.arrays_mut().into_iter().zip(src.arrays()) {
        for (a, b) in d.iter_mut().zip(s.data) {
            *a += b;
        }
    }
}

/// Largest relative disagreement between reverse-mode gradients and central
/// finite differences, per gradient family.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheck {
    pub params: f64,
    pub inputs: f64,
    pub initial_state: f64,
}

impl GradCheck {
    pub fn worst(&self) -> f64 {
        self.params.max(self.inputs).max(self.initial_state)
    }
}

/// `|a − f| / max(|a|, |f|, floor)`; the floor keeps round-off on
/// vanishing entries from reading as a large relative error.
fn rel_gap(analytic: f64, numeric: f64) -> f64 {
    const FLOOR: f64 = 1e-6;
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Checks every parameter, input and initial-state gradient of the
/// cross-entropy loss on `h_T` against central differences with step `eps`.
pub fn gradient_check(
    params: &CellParams,
    head: &ClassifierHead,
    h0: &Vector,
    xs: &[Vector],
    target: usize,
    eps: f64,
) -> Result<GradCheck> {
    let loss = |p: &CellParams, h0: &Vector, xs: &[Vector]| -> Result<f64> {
        let traj = forward_sequence(p, h0, xs)?;
        Ok(head.loss_and_grad(traj.final_state(), target)?.loss)
    };
    let traj = forward_sequence(params, h0, xs)?;
    let out = head.loss_and_grad(traj.final_state(), target)?;
    let grads = backward_sequence(params, &traj, &out.dl_dh)?;
    let mut report = GradCheck::default();

    let analytic: Vec<Vec<f64>> = grads.params.arrays().iter().map(|a| a.data.to_vec()).collect();
    for (k, a_arr) in analytic.iter().enumerate() {
        for (j, &a) in a_arr.iter().enumerate() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus.arrays_mut()[k].1[j] += eps;
            minus.arrays_mut()[k].1[j] -= eps;
            let numeric = (loss(&plus, h0, xs)? - loss(&minus, h0, xs)?) / (2.0 * eps);
            report.params = report.params.max(rel_gap(a, numeric));
        }
    }
    for t in 0..xs.len() {
        for j in 0..xs[t].len() {
            let mut plus = xs.to_vec();
            let mut minus = xs.to_vec();
            plus[t][j] += eps;
            minus[t][j] -= eps;
            let numeric = (loss(params, h0, &plus)? - loss(params, h0, &minus)?) / (2.0 * eps);
            report.inputs = report.inputs.max(rel_gap(grads.input_grads[t][j], numeric));
        }
    }
    for j in 0..h0.len() {
        let mut plus = h0.clone();
        let mut minus = h0.clone();
        plus[j] += eps;
        minus[j] -= eps;
        let numeric = (loss(params, &plus, xs)? - loss(params, &minus, xs)?) / (2.0 * eps);
        report.initial_state = report.initial_state.max(rel_gap(grads.state_grads[0][j], numeric));
    }
    Ok(report)
}
