//! One-step state transitions for the leaky, gated and GRU cell families,
//! each with an optional polynomial decay term `|h|^r ⊙ h`.
//!
//! With `rate_r == 0` every cell reduces to its classical form:
//!
//! * leaky: `h = h_prev + α(tanh(U h_prev + W x + b) − h_prev)`
//! * gated: `h = f ⊙ h_prev + i ⊙ h̃`
//! * GRU:   `h = (1 − z) ⊙ h_prev + z ⊙ h̃`
//!
//! With `rate_r > 0` the linear forgetting term is replaced by the
//! polynomial one, e.g. `f ⊙ h_prev` becomes `h_prev − (1 − f) ⊙ |h_prev|^r ⊙ h_prev`.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_dim, Error, Result};
use crate::math::{affine, sigmoid, Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellKind {
    Leaky,
    Gated,
    Gru,
}

impl CellKind {
    pub const ALL: [CellKind; 3] = [CellKind::Leaky, CellKind::Gated, CellKind::Gru];

    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Leaky => "leaky",
            CellKind::Gated => "gated",
            CellKind::Gru => "gru",
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "leaky" => Ok(CellKind::Leaky),
            "gated" => Ok(CellKind::Gated),
            "gru" => Ok(CellKind::Gru),
            other => Err(Error::Config(format!(
                "unknown cell kind '{other}' (expected leaky, gated or gru)"
            ))),
        }
    }
}

/// `|h|^r`, with `|0|^r = 0` for `r > 0`.
fn abs_pow(h: f64, r: f64) -> f64 {
    let a = h.abs();
    if r == 0.0 {
        1.0
    } else if a == 0.0 {
        0.0
    } else if r == 1.0 {
        a
    } else if r == 2.0 {
        a * a
    } else {
        (r * a.ln()).exp()
    }
}

/// The decay term `|h|^r · h`.
pub fn decay_term(h: f64, r: f64) -> f64 {
    abs_pow(h, r) * h
}

/// `d/dh (|h|^r · h) = (r + 1)|h|^r`; zero at the origin when `r > 0`.
pub fn decay_term_deriv(h: f64, r: f64) -> f64 {
    (r + 1.0) * abs_pow(h, r)
}

fn check_rate(rate_r: f64) -> Result<()> {
    if !(rate_r >= 0.0 && rate_r.is_finite()) {
        return Err(Error::Config(format!(
            "rate parameter r must be finite and >= 0, got {rate_r}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeakyParams {
    pub alpha: f64,
    pub u: Matrix,
    pub w: Matrix,
    pub b: Vector,
    pub rate_r: f64,
}

impl LeakyParams {
    pub fn zeros(n: usize, d: usize, alpha: f64, rate_r: f64) -> Self {
        LeakyParams {
            alpha,
            u: Matrix::zeros(n, n),
            w: Matrix::zeros(n, d),
            b: Vector::zeros(n),
            rate_r,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatedParams {
    pub u_f: Matrix,
    pub w_f: Matrix,
    pub b_f: Vector,
    pub u_i: Matrix,
    pub w_i: Matrix,
    pub b_i: Vector,
    pub u: Matrix,
    pub w: Matrix,
    pub b: Vector,
    pub rate_r: f64,
}

impl GatedParams {
    pub fn zeros(n: usize, d: usize, rate_r: f64) -> Self {
        GatedParams {
            u_f: Matrix::zeros(n, n),
            w_f: Matrix::zeros(n, d),
            b_f: Vector::zeros(n),
            u_i: Matrix::zeros(n, n),
            w_i: Matrix::zeros(n, d),
            b_i: Vector::zeros(n),
            u: Matrix::zeros(n, n),
            w: Matrix::zeros(n, d),
            b: Vector::zeros(n),
            rate_r,
        }
    }
}

/// GRU parameters. `rate_r > 0` applies the polynomial decay to the
/// `(1 − z) ⊙ h_prev` retention term, treating `1 − z` as the forget gate.
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub u_z: Matrix,
    pub w_z: Matrix,
    pub b_z: Vector,
    pub u_r: Matrix,
    pub w_r: Matrix,
    pub b_r: Vector,
    pub u: Matrix,
    pub w: Matrix,
    pub b: Vector,
    pub rate_r: f64,
}

impl GruParams {
    pub fn zeros(n: usize, d: usize, rate_r: f64) -> Self {
        GruParams {
            u_z: Matrix::zeros(n, n),
            w_z: Matrix::zeros(n, d),
            b_z: Vector::zeros(n),
            u_r: Matrix::zeros(n, n),
            w_r: Matrix::zeros(n, d),
            b_r: Vector::zeros(n),
            u: Matrix::zeros(n, n),
            w: Matrix::zeros(n, d),
            b: Vector::zeros(n),
            rate_r,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CellParams {
    Leaky(LeakyParams),
    Gated(GatedParams),
    Gru(GruParams),
}

/// A named view of one parameter array, in a fixed order per cell kind.
#[derive(Debug)]
pub struct ArrayView<'a> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

impl CellParams {
    pub fn zeros(kind: CellKind, n: usize, d: usize, rate_r: f64) -> Self {
        match kind {
            CellKind::Leaky => CellParams::Leaky(LeakyParams::zeros(n, d, 0.5, rate_r)),
            CellKind::Gated => CellParams::Gated(GatedParams::zeros(n, d, rate_r)),
            CellKind::Gru => CellParams::Gru(GruParams::zeros(n, d, rate_r)),
        }
    }

    /// Same shapes and rate, every array (and α) zeroed. Used as a
    /// gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, data) in out.arrays_mut() {
            data.fill(0.0);
        }
        out
    }

    pub fn kind(&self) -> CellKind {
        match self {
            CellParams::Leaky(_) => CellKind::Leaky,
            CellParams::Gated(_) => CellKind::Gated,
            CellParams::Gru(_) => CellKind::Gru,
        }
    }

    pub fn rate_r(&self) -> f64 {
        match self {
            CellParams::Leaky(p) => p.rate_r,
            CellParams::Gated(p) => p.rate_r,
            CellParams::Gru(p) => p.rate_r,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        match self {
            CellParams::Leaky(p) => p.b.len(),
            CellParams::Gated(p) => p.b.len(),
            CellParams::Gru(p) => p.b.len(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            CellParams::Leaky(p) => p.w.cols(),
            CellParams::Gated(p) => p.w.cols(),
            CellParams::Gru(p) => p.w.cols(),
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            CellParams::Leaky(p) => Some(p.alpha),
            _ => None,
        }
    }

    /// Checks shapes, the rate and (for the leaky cell) `0 < α < 1`.
    pub fn validate(&self) -> Result<()> {
        check_rate(self.rate_r())?;
        let n = self.hidden_dim();
        let d = self.input_dim();
        if let CellParams::Leaky(p) = self {
            if !(p.alpha > 0.0 && p.alpha < 1.0) {
                return Err(Error::Config(format!(
                    "leak rate alpha must lie in (0, 1), got {}",
                    p.alpha
                )));
            }
        }
        for view in self.arrays() {
            let expected: usize = match view.name {
                "alpha" => 1,
                name if name.starts_with('u') => n * n,
                name if name.starts_with('w') => n * d,
                _ => n,
            };
            check_dim(view.name, expected, view.data.len())?;
        }
        Ok(())
    }

    pub fn arrays(&self) -> Vec<ArrayView<'_>> {
        fn m<'a>(name: &'static str, m: &'a Matrix) -> ArrayView<'a> {
            ArrayView {
                name,
                shape: vec![m.rows(), m.cols()],
                data: m.as_slice(),
            }
        }
        fn v<'a>(name: &'static str, v: &'a Vector) -> ArrayView<'a> {
            ArrayView {
                name,
                shape: vec![v.len()],
                data: v.as_slice(),
            }
        }
        match self {
            CellParams::Leaky(p) => vec![
                ArrayView {
                    name: "alpha",
                    shape: vec![1],
                    data: std::slice::from_ref(&p.alpha),
                },
                m("u", &p.u),
                m("w", &p.w),
                v("b", &p.b),
            ],
            CellParams::Gated(p) => vec![
                m("u_f", &p.u_f),
                m("w_f", &p.w_f),
                v("b_f", &p.b_f),
                m("u_i", &p.u_i),
                m("w_i", &p.w_i),
                v("b_i", &p.b_i),
                m("u", &p.u),
                m("w", &p.w),
                v("b", &p.b),
            ],
            CellParams::Gru(p) => vec![
                m("u_z", &p.u_z),
                m("w_z", &p.w_z),
                v("b_z", &p.b_z),
                m("u_r", &p.u_r),
                m("w_r", &p.w_r),
                v("b_r", &p.b_r),
                m("u", &p.u),
                m("w", &p.w),
                v("b", &p.b),
            ],
        }
    }

    /// Mutable views in the same order as [`CellParams::arrays`].
    pub fn arrays_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        match self {
            CellParams::Leaky(p) => vec![
                ("alpha", std::slice::from_mut(&mut p.alpha)),
                ("u", p.u.as_mut_slice()),
                ("w", p.w.as_mut_slice()),
                ("b", p.b.as_mut_slice()),
            ],
            CellParams::Gated(p) => vec![
                ("u_f", p.u_f.as_mut_slice()),
                ("w_f", p.w_f.as_mut_slice()),
                ("b_f", p.b_f.as_mut_slice()),
                ("u_i", p.u_i.as_mut_slice()),
                ("w_i", p.w_i.as_mut_slice()),
                ("b_i", p.b_i.as_mut_slice()),
                ("u", p.u.as_mut_slice()),
                ("w", p.w.as_mut_slice()),
                ("b", p.b.as_mut_slice()),
            ],
            CellParams::Gru(p) => vec![
                ("u_z", p.u_z.as_mut_slice()),
                ("w_z", p.w_z.as_mut_slice()),
                ("b_z", p.b_z.as_mut_slice()),
                ("u_r", p.u_r.as_mut_slice()),
                ("w_r", p.w_r.as_mut_slice()),
                ("b_r", p.b_r.as_mut_slice()),
                ("u", p.u.as_mut_slice()),
                ("w", p.w.as_mut_slice()),
                ("b", p.b.as_mut_slice()),
            ],
        }
    }

    pub fn step(&self, h_prev: &Vector, x: &Vector) -> Result<(Vector, StepCache)> {
        match self {
            CellParams::Leaky(p) => leaky_step(p, h_prev, x),
            CellParams::Gated(p) => gated_step(p, h_prev, x),
            CellParams::Gru(p) => gru_step(p, h_prev, x),
        }
    }

    /// Reverse-mode step: given `g = ∂L/∂h_t`, accumulates parameter
    /// gradients into `grads` and returns `(∂L/∂h_{t−1}, ∂L/∂x_t)`.
    pub fn step_backward(
        &self,
        cache: &StepCache,
        g: &Vector,
        grads: &mut CellParams,
    ) -> Result<(Vector, Vector)> {
        match (self, cache, grads) {
            (CellParams::Leaky(p), StepCache::Leaky(c), CellParams::Leaky(gp)) => {
                Ok(leaky_backward(p, c, g, gp))
            }
            (CellParams::Gated(p), StepCache::Gated(c), CellParams::Gated(gp)) => {
                Ok(gated_backward(p, c, g, gp))
            }
            (CellParams::Gru(p), StepCache::Gru(c), CellParams::Gru(gp)) => {
                Ok(gru_backward(p, c, g, gp))
            }
            _ => Err(Error::Integrity(
                "cell kind of parameters, cache and gradient buffer differ".into(),
            )),
        }
    }

    pub fn jacobian(&self, h_prev: &Vector, x: &Vector) -> Result<Matrix> {
        jacobian_step(self, h_prev, x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeakyCache {
    pub h_prev: Vector,
    pub x: Vector,
    pub pre: Vector,
    pub cand: Vector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatedCache {
    pub h_prev: Vector,
    pub x: Vector,
    pub pre_f: Vector,
    pub f: Vector,
    pub pre_i: Vector,
    pub i: Vector,
    pub pre: Vector,
    pub cand: Vector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GruCache {
    pub h_prev: Vector,
    pub x: Vector,
    pub pre_z: Vector,
    pub z: Vector,
    pub pre_r: Vector,
    pub r: Vector,
    pub pre: Vector,
    pub cand: Vector,
}

/// Forward intermediates of one step, enough for an exact backward pass.
#[derive(Clone, Debug, PartialEq)]
pub enum StepCache {
    Leaky(LeakyCache),
    Gated(GatedCache),
    Gru(GruCache),
}

impl StepCache {
    pub fn h_prev(&self) -> &Vector {
        match self {
            StepCache::Leaky(c) => &c.h_prev,
            StepCache::Gated(c) => &c.h_prev,
            StepCache::Gru(c) => &c.h_prev,
        }
    }

    pub fn x(&self) -> &Vector {
        match self {
            StepCache::Leaky(c) => &c.x,
            StepCache::Gated(c) => &c.x,
            StepCache::Gru(c) => &c.x,
        }
    }
}

/// Leaky step; `rate_r == 0` is the plain leaky unit, `rate_r > 0` the
/// polynomial-decay variant `h_prev + α(h̃ − |h_prev|^r ⊙ h_prev)`.
pub fn leaky_step(p: &LeakyParams, h_prev: &Vector, x: &Vector) -> Result<(Vector, StepCache)> {
    let pre = affine(&p.u, h_prev, &p.w, x, &p.b)?;
    let cand = pre.map(f64::tanh);
    let r = p.rate_r;
    let h = h_prev.zip_map(&cand, |hp, c| {
        let decay = if r == 0.0 { hp } else { decay_term(hp, r) };
        hp + p.alpha * (c - decay)
    });
    let cache = StepCache::Leaky(LeakyCache {
        h_prev: h_prev.clone(),
        x: x.clone(),
        pre,
        cand,
    });
    Ok((h, cache))
}

/// Same as [`leaky_step`]; requires `rate_r > 0`.
pub fn poly_leaky_step(
    p: &LeakyParams,
    h_prev: &Vector,
    x: &Vector,
) -> Result<(Vector, StepCache)> {
    if p.rate_r <= 0.0 {
        return Err(Error::Config("polynomial cell needs rate_r > 0".into()));
    }
    leaky_step(p, h_prev, x)
}

fn gate_values(
    u_g: &Matrix,
    w_g: &Matrix,
    b_g: &Vector,
    h: &Vector,
    x: &Vector,
) -> Result<(Vector, Vector)> {
    let pre = affine(u_g, h, w_g, x, b_g)?;
    let val = pre.map(sigmoid);
    Ok((pre, val))
}

pub fn gated_step(p: &GatedParams, h_prev: &Vector, x: &Vector) -> Result<(Vector, StepCache)> {
    let (pre_f, f) = gate_values(&p.u_f, &p.w_f, &p.b_f, h_prev, x)?;
    let (pre_i, i) = gate_values(&p.u_i, &p.w_i, &p.b_i, h_prev, x)?;
    let pre = affine(&p.u, h_prev, &p.w, x, &p.b)?;
    let cand = pre.map(f64::tanh);
    let r = p.rate_r;
    let h = Vector::from(
        (0..h_prev.len())
            .map(|k| {
                let hp = h_prev[k];
                let kept = if r == 0.0 {
                    f[k] * hp
                } else {
                    hp - (1.0 - f[k]) * decay_term(hp, r)
                };
                kept + i[k] * cand[k]
            })
            .collect::<Vec<_>>(),
    );
    let cache = StepCache::Gated(GatedCache {
        h_prev: h_prev.clone(),
        x: x.clone(),
        pre_f,
        f,
        pre_i,
        i,
        pre,
        cand,
    });
    Ok((h, cache))
}

/// Same as [`gated_step`]; requires `rate_r > 0`.
pub fn poly_gated_step(
    p: &GatedParams,
    h_prev: &Vector,
    x: &Vector,
) -> Result<(Vector, StepCache)> {
    if p.rate_r <= 0.0 {
        return Err(Error::Config("polynomial cell needs rate_r > 0".into()));
    }
    gated_step(p, h_prev, x)
}

pub fn gru_step(p: &GruParams, h_prev: &Vector, x: &Vector) -> Result<(Vector, StepCache)> {
    let (pre_z, z) = gate_values(&p.u_z, &p.w_z, &p.b_z, h_prev, x)?;
    let (pre_r, rg) = gate_values(&p.u_r, &p.w_r, &p.b_r, h_prev, x)?;
    let reset_h = rg.hadamard(h_prev);
    let pre = affine(&p.u, &reset_h, &p.w, x, &p.b)?;
    let cand = pre.map(f64::tanh);
    let r = p.rate_r;
    let h = Vector::from(
        (0..h_prev.len())
            .map(|k| {
                let hp = h_prev[k];
                if r == 0.0 {
                    (1.0 - z[k]) * hp + z[k] * cand[k]
                } else {
                    hp - z[k] * decay_term(hp, r) + z[k] * cand[k]
                }
            })
            .collect::<Vec<_>>(),
    );
    let cache = StepCache::Gru(GruCache {
        h_prev: h_prev.clone(),
        x: x.clone(),
        pre_z,
        z,
        pre_r,
        r: rg,
        pre,
        cand,
    });
    Ok((h, cache))
}

fn leaky_backward(
    p: &LeakyParams,
    c: &LeakyCache,
    g: &Vector,
    grads: &mut LeakyParams,
) -> (Vector, Vector) {
    let r = p.rate_r;
    let n = g.len();
    let mut g_pre = vec![0.0; n];
    let mut dh_prev = vec![0.0; n];
    for k in 0..n {
        let hp = c.h_prev[k];
        let (decay, decay_d) = if r == 0.0 {
            (hp, 1.0)
        } else {
            (decay_term(hp, r), decay_term_deriv(hp, r))
        };
        grads.alpha += g[k] * (c.cand[k] - decay);
        g_pre[k] = p.alpha * g[k] * (1.0 - c.cand[k] * c.cand[k]);
        dh_prev[k] = g[k] * (1.0 - p.alpha * decay_d);
    }
    grads.u.add_outer(&g_pre, c.h_prev.as_slice());
    grads.w.add_outer(&g_pre, c.x.as_slice());
    for (gb, gp) in grads.b.as_mut_slice().iter_mut().zip(&g_pre) {
        *gb += gp;
    }
    p.u.matvec_t_acc(&g_pre, &mut dh_prev);
    let mut dx = vec![0.0; c.x.len()];
    p.w.matvec_t_acc(&g_pre, &mut dx);
    (Vector::from(dh_prev), Vector::from(dx))
}

fn accumulate_affine(
    u_g: &mut Matrix,
    w_g: &mut Matrix,
    b_g: &mut Vector,
    g_pre: &[f64],
    h: &[f64],
    x: &[f64],
) {
    u_g.add_outer(g_pre, h);
    w_g.add_outer(g_pre, x);
    for (gb, gp) in b_g.as_mut_slice().iter_mut().zip(g_pre) {
        *gb += gp;
    }
}

fn gated_backward(
    p: &GatedParams,
    c: &GatedCache,
    g: &Vector,
    grads: &mut GatedParams,
) -> (Vector, Vector) {
    let r = p.rate_r;
    let n = g.len();
    let mut g_pre_f = vec![0.0; n];
    let mut g_pre_i = vec![0.0; n];
    let mut g_pre = vec![0.0; n];
    let mut dh_prev = vec![0.0; n];
    for k in 0..n {
        let hp = c.h_prev[k];
        let (f, i, cand) = (c.f[k], c.i[k], c.cand[k]);
        // kept = f·h (r = 0) or h − (1 − f)·P(h); ∂kept/∂f is h or P(h)
        let (dkept_df, dkept_dh) = if r == 0.0 {
            (hp, f)
        } else {
            (decay_term(hp, r), 1.0 - (1.0 - f) * decay_term_deriv(hp, r))
        };
        g_pre_f[k] = g[k] * dkept_df * f * (1.0 - f);
        g_pre_i[k] = g[k] * cand * i * (1.0 - i);
        g_pre[k] = g[k] * i * (1.0 - cand * cand);
        dh_prev[k] = g[k] * dkept_dh;
    }
    let h = c.h_prev.as_slice();
    let x = c.x.as_slice();
    accumulate_affine(&mut grads.u_f, &mut grads.w_f, &mut grads.b_f, &g_pre_f, h, x);
    accumulate_affine(&mut grads.u_i, &mut grads.w_i, &mut grads.b_i, &g_pre_i, h, x);
    accumulate_affine(&mut grads.u, &mut grads.w, &mut grads.b, &g_pre, h, x);
    p.u_f.matvec_t_acc(&g_pre_f, &mut dh_prev);
    p.u_i.matvec_t_acc(&g_pre_i, &mut dh_prev);
    p.u.matvec_t_acc(&g_pre, &mut dh_prev);
    let mut dx = vec![0.0; x.len()];
    p.w_f.matvec_t_acc(&g_pre_f, &mut dx);
    p.w_i.matvec_t_acc(&g_pre_i, &mut dx);
    p.w.matvec_t_acc(&g_pre, &mut dx);
    (Vector::from(dh_prev), Vector::from(dx))
}

fn gru_backward(p: &GruParams, c: &GruCache, g: &Vector, grads: &mut GruParams) -> (Vector, Vector) {
    let r = p.rate_r;
    let n = g.len();
    let mut g_pre_z = vec![0.0; n];
    let mut g_pre = vec![0.0; n];
    let mut dh_prev = vec![0.0; n];
    for k in 0..n {
        let hp = c.h_prev[k];
        let (z, cand) = (c.z[k], c.cand[k]);
        let (retained, dret_dh) = if r == 0.0 {
            (hp, 1.0 - z)
        } else {
            (decay_term(hp, r), 1.0 - z * decay_term_deriv(hp, r))
        };
        g_pre_z[k] = g[k] * (cand - retained) * z * (1.0 - z);
        g_pre[k] = g[k] * z * (1.0 - cand * cand);
        dh_prev[k] = g[k] * dret_dh;
    }
    let reset_h = c.r.hadamard(&c.h_prev);
    let x = c.x.as_slice();
    accumulate_affine(&mut grads.u, &mut grads.w, &mut grads.b, &g_pre, reset_h.as_slice(), x);

    // gradient flowing into r ⊙ h_prev
    let mut g_reset_h = vec![0.0; n];
    p.u.matvec_t_acc(&g_pre, &mut g_reset_h);
    let mut g_pre_r = vec![0.0; n];
    for k in 0..n {
        let rk = c.r[k];
        g_pre_r[k] = g_reset_h[k] * c.h_prev[k] * rk * (1.0 - rk);
        dh_prev[k] += g_reset_h[k] * rk;
    }
    let h = c.h_prev.as_slice();
    accumulate_affine(&mut grads.u_z, &mut grads.w_z, &mut grads.b_z, &g_pre_z, h, x);
    accumulate_affine(&mut grads.u_r, &mut grads.w_r, &mut grads.b_r, &g_pre_r, h, x);
    p.u_z.matvec_t_acc(&g_pre_z, &mut dh_prev);
    p.u_r.matvec_t_acc(&g_pre_r, &mut dh_prev);
    let mut dx = vec![0.0; x.len()];
    p.w_z.matvec_t_acc(&g_pre_z, &mut dx);
    p.w_r.matvec_t_acc(&g_pre_r, &mut dx);
    p.w.matvec_t_acc(&g_pre, &mut dx);
    (Vector::from(dh_prev), Vector::from(dx))
}

/// Exact one-step Jacobian `∂h_t/∂h_{t−1}` (row `i` = output unit `i`).
///
/// For the leaky cell this is `diag(1 − α·P'(h_prev)) + α·D·U` with
/// `D = diag(1 − h̃²)` and `P'` the derivative of the forgetting term
/// (`P' = 1` when `r = 0`, giving `(1 − α)I + α·D·U`).
pub fn jacobian_step(params: &CellParams, h_prev: &Vector, x: &Vector) -> Result<Matrix> {
    let (_, cache) = params.step(h_prev, x)?;
    let n = h_prev.len();
    let r = params.rate_r();
    let jac = match (params, &cache) {
        (CellParams::Leaky(p), StepCache::Leaky(c)) => {
            let d = c.cand.map(|t| p.alpha * (1.0 - t * t));
            let mut j = p.u.scale_rows(&d);
            for k in 0..n {
                let lead = if r == 0.0 {
                    1.0 - p.alpha
                } else {
                    1.0 - p.alpha * decay_term_deriv(h_prev[k], r)
                };
                j[(k, k)] += lead;
            }
            j
        }
        (CellParams::Gated(p), StepCache::Gated(c)) => {
            let mut lead = Vector::zeros(n);
            let mut df = Vector::zeros(n);
            for k in 0..n {
                let hp = h_prev[k];
                let f = c.f[k];
                let (dkept_df, dkept_dh) = if r == 0.0 {
                    (hp, f)
                } else {
                    (decay_term(hp, r), 1.0 - (1.0 - f) * decay_term_deriv(hp, r))
                };
                lead[k] = dkept_dh;
                df[k] = dkept_df * f * (1.0 - f);
            }
            let di = c.cand.zip_map(&c.i, |t, i| t * i * (1.0 - i));
            let dc = c.i.zip_map(&c.cand, |i, t| i * (1.0 - t * t));
            let mut j = p.u_f.scale_rows(&df);
            j.add_assign(&p.u_i.scale_rows(&di));
            j.add_assign(&p.u.scale_rows(&dc));
            j.add_assign(&Matrix::from_diag(&lead));
            j
        }
        (CellParams::Gru(p), StepCache::Gru(c)) => {
            // diag(1 − z) + diag(z)·∂h̃/∂h + diag(h̃ − h)·∂z/∂h, with the
            // retention term generalised to the polynomial form
            let mut lead = Vector::zeros(n);
            let mut dz = Vector::zeros(n);
            for k in 0..n {
                let hp = h_prev[k];
                let z = c.z[k];
                let (retained, dret) = if r == 0.0 {
                    (hp, 1.0 - z)
                } else {
                    (decay_term(hp, r), 1.0 - z * decay_term_deriv(hp, r))
                };
                lead[k] = dret;
                dz[k] = (c.cand[k] - retained) * z * (1.0 - z);
            }
            // ∂h̃/∂h = diag(1 − h̃²)·U·(diag(r) + diag(h ⊙ r(1 − r))·U_r)
            let inner = {
                let mut m = p.u_r.scale_rows(&c.r.zip_map(h_prev, |rk, hk| hk * rk * (1.0 - rk)));
                m.add_assign(&Matrix::from_diag(&c.r));
                m
            };
            let dcand = p.u.matmul(&inner)?.scale_rows(&c.cand.map(|t| 1.0 - t * t));
            let mut j = dcand.scale_rows(&c.z);
            j.add_assign(&p.u_z.scale_rows(&dz));
            j.add_assign(&Matrix::from_diag(&lead));
            j
        }
        _ => unreachable!("step returns a cache of the same kind"),
    };
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> Vector {
        Vector::from(xs)
    }

    fn fill_uniform(params: &mut CellParams, rng: &mut ChaCha8Rng) {
        for (name, data) in params.arrays_mut() {
            for x in data.iter_mut() {
                *x = if name == "alpha" {
                    rng.gen_range(0.05..0.95)
                } else {
                    rng.gen_range(-1.0..1.0)
                };
            }
        }
    }

    fn fd_jacobian(params: &CellParams, h: &Vector, x: &Vector, step: f64) -> Matrix {
        let n = h.len();
        let mut j = Matrix::zeros(n, n);
        for col in 0..n {
            let mut hp = h.clone();
            let mut hm = h.clone();
            hp[col] += step;
            hm[col] -= step;
            let fp = params.step(&hp, x).unwrap().0;
            let fm = params.step(&hm, x).unwrap().0;
            for row in 0..n {
                j[(row, col)] = (fp[row] - fm[row]) / (2.0 * step);
            }
        }
        j
    }

    #[test]
    fn leaky_free_decay_one_step() {
        let p = LeakyParams::zeros(1, 1, 0.25, 0.0);
        let (h, _) = leaky_step(&p, &v(&[1.0]), &v(&[0.0])).unwrap();
        assert_eq!(h, v(&[0.75]));
    }

    #[test]
    fn leaky_origin_is_fixed() {
        for alpha in [0.1, 0.5, 0.9] {
            let p = LeakyParams::zeros(3, 2, alpha, 0.0);
            let (h, _) = leaky_step(&p, &Vector::zeros(3), &Vector::zeros(2)).unwrap();
            assert_eq!(h, Vector::zeros(3));
        }
    }

    #[test]
    fn leaky_input_drive() {
        let mut p = LeakyParams::zeros(1, 1, 0.5, 0.0);
        p.w = Matrix::from_rows(&[&[1.0]]);
        let (h, _) = leaky_step(&p, &v(&[0.0]), &v(&[1.0])).unwrap();
        assert!((h[0] - 0.5 * 1.0_f64.tanh()).abs() < 1e-15);
        assert!((h[0] - 0.380797).abs() < 1e-6);
    }

    #[test]
    fn poly_leaky_cubic_decay() {
        let p = LeakyParams::zeros(1, 1, 0.5, 2.0);
        let (h, _) = poly_leaky_step(&p, &v(&[1.0]), &v(&[0.0])).unwrap();
        assert_eq!(h, v(&[0.5]));
        let (h0, _) = poly_leaky_step(&p, &v(&[0.0]), &v(&[0.0])).unwrap();
        assert_eq!(h0, v(&[0.0]));
        for h in [-1.7, -0.3, 0.0, 0.4, 2.5] {
            assert!((decay_term(h, 2.0) - h * h * h).abs() < 1e-15);
        }
        assert!(poly_leaky_step(&LeakyParams::zeros(1, 1, 0.5, 0.0), &v(&[1.0]), &v(&[0.0])).is_err());
    }

    #[test]
    fn decay_term_non_integer_rate() {
        assert_eq!(decay_term(0.0, 0.5), 0.0);
        assert_eq!(decay_term_deriv(0.0, 0.5), 0.0);
        assert!((decay_term(4.0, 0.5) - 8.0).abs() < 1e-12);
        assert!((decay_term(-4.0, 0.5) + 8.0).abs() < 1e-12);
        assert!((decay_term_deriv(4.0, 0.5) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn gated_zero_params() {
        let p = GatedParams::zeros(1, 1, 0.0);
        let (h, _) = gated_step(&p, &v(&[2.0]), &v(&[0.3])).unwrap();
        assert_eq!(h, v(&[1.0]));
    }

    #[test]
    fn gated_large_forget_bias_keeps_state() {
        let mut p = GatedParams::zeros(1, 1, 0.0);
        p.b_f = v(&[10.0]);
        let (h, _) = gated_step(&p, &v(&[1.0]), &v(&[0.0])).unwrap();
        let f = sigmoid(10.0);
        assert!((f - 0.9999546).abs() < 1e-7);
        assert!((h[0] - f).abs() < 1e-15);
    }

    #[test]
    fn gated_constant_gate_is_geometric() {
        let mut p = GatedParams::zeros(2, 1, 0.0);
        p.b_f = v(&[1.5, -0.7]);
        p.b_i = v(&[0.3, 2.0]);
        p.w_f = Matrix::zeros(2, 1);
        let h0 = v(&[0.8, -1.3]);
        let mut h = h0.clone();
        let k = 25;
        for t in 0..k {
            h = gated_step(&p, &h, &v(&[t as f64 * 0.1])).unwrap().0;
        }
        for u in 0..2 {
            let expected = sigmoid(p.b_f[u]).powi(k) * h0[u];
            assert!((h[u] - expected).abs() <= 1e-12 * expected.abs().max(1e-300));
        }
    }

    #[test]
    fn poly_gated_direct_evaluation() {
        let p = GatedParams::zeros(1, 1, 2.0);
        let (h, _) = poly_gated_step(&p, &v(&[1.0]), &v(&[0.0])).unwrap();
        assert_eq!(h, v(&[0.5]));

        let mut q = GatedParams::zeros(1, 1, 2.0);
        q.b = v(&[0.4]);
        q.b_i = v(&[0.2]);
        let (h, _) = poly_gated_step(&q, &v(&[0.0]), &v(&[0.0])).unwrap();
        assert_eq!(h[0], sigmoid(0.2) * 0.4_f64.tanh());
    }

    #[test]
    fn poly_gated_small_rate_approaches_classic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut classic = CellParams::zeros(CellKind::Gated, 3, 2, 0.0);
        fill_uniform(&mut classic, &mut rng);
        let h = v(&[0.7, -0.4, 1.1]);
        let x = v(&[0.2, -0.9]);
        let (h_classic, _) = classic.step(&h, &x).unwrap();
        // the r→0 formula h − (1 − f)|h|^0 h evaluates to f ⊙ h
        if let CellParams::Gated(p) = &classic {
            let (_, cache) = gated_step(p, &h, &x).unwrap();
            let StepCache::Gated(c) = cache else { unreachable!() };
            for k in 0..3 {
                let via_decay = h[k] - (1.0 - c.f[k]) * h[k] + c.i[k] * c.cand[k];
                assert!((via_decay - h_classic[k]).abs() < 1e-15);
            }
        }
        let mut tiny = classic.clone();
        if let CellParams::Gated(p) = &mut tiny {
            p.rate_r = 1e-9;
        }
        let (h_tiny, _) = tiny.step(&h, &x).unwrap();
        assert!(h_tiny.sub(&h_classic).max_abs() < 1e-8);
    }

    #[test]
    fn gru_cases() {
        let p = GruParams::zeros(1, 1, 0.0);
        assert_eq!(gru_step(&p, &v(&[2.0]), &v(&[0.5])).unwrap().0, v(&[1.0]));
        assert_eq!(gru_step(&p, &v(&[0.0]), &v(&[0.0])).unwrap().0, v(&[0.0]));
        let mut q = GruParams::zeros(1, 1, 0.0);
        q.b_z = v(&[-10.0]);
        let (h, _) = gru_step(&q, &v(&[1.0]), &v(&[0.0])).unwrap();
        assert!((h[0] - 1.0).abs() < 1e-4);
        assert!((h[0] - (1.0 - sigmoid(-10.0))).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        let p = LeakyParams::zeros(2, 1, 0.5, 0.0);
        assert!(leaky_step(&p, &v(&[1.0]), &v(&[0.0])).is_err());
        assert!(leaky_step(&p, &v(&[1.0, 0.0]), &v(&[0.0, 1.0])).is_err());
        let g = GruParams::zeros(2, 1, 0.0);
        assert!(gru_step(&g, &v(&[1.0, 2.0, 3.0]), &v(&[0.0])).is_err());
    }

    #[test]
    fn leaky_jacobian_without_recurrence_is_scaled_identity() {
        let mut p = LeakyParams::zeros(3, 2, 0.3, 0.0);
        p.w = Matrix::from_rows(&[&[1.0, -2.0], &[0.5, 0.5], &[3.0, 0.0]]);
        p.b = v(&[0.1, -0.2, 0.3]);
        let j = jacobian_step(&CellParams::Leaky(p), &v(&[0.2, 0.9, -1.0]), &v(&[1.0, 2.0])).unwrap();
        let expected = Matrix::identity(3).scale_rows(&Vector::filled(3, 0.7));
        assert_eq!(j, expected);
    }

    #[test]
    fn poly_leaky_jacobian_direct() {
        let p = CellParams::Leaky(LeakyParams::zeros(1, 1, 0.5, 2.0));
        let j = jacobian_step(&p, &v(&[1.0]), &v(&[0.0])).unwrap();
        assert_eq!(j.as_slice(), &[-0.5]);
    }

    #[test]
    fn gru_jacobian_zero_params_matches_fd() {
        let p = CellParams::Gru(GruParams::zeros(1, 1, 0.0));
        let h = v(&[2.0]);
        let x = v(&[0.0]);
        let j = jacobian_step(&p, &h, &x).unwrap();
        // all recurrent matrices zero: only diag(1 − z) = 0.5 survives
        assert_eq!(j.as_slice(), &[0.5]);
        let fd = fd_jacobian(&p, &h, &x, 1e-5);
        assert!((fd[(0, 0)] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in CellKind::ALL {
            for rate in [0.0, 0.5, 1.0, 2.0] {
                for _ in 0..100 {
                    let n = rng.gen_range(1..=4);
                    let d = rng.gen_range(1..=3);
                    let mut params = CellParams::zeros(kind, n, d, rate);
                    fill_uniform(&mut params, &mut rng);
                    let h = Vector::from((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
                    let x = Vector::from((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
                    let j = jacobian_step(&params, &h, &x).unwrap();
                    let fd = fd_jacobian(&params, &h, &x, 1e-6);
                    let err = j.sub(&fd).frobenius() / j.frobenius().max(1e-8);
                    assert!(err < 1e-5, "{kind} r={rate}: rel err {err}");
                }
            }
        }
    }

    #[test]
    fn free_input_jacobian_product_is_power_of_leak() {
        let n = 3;
        let alpha = 0.2;
        let mut p = LeakyParams::zeros(n, 2, alpha, 0.0);
        p.w = Matrix::from_rows(&[&[0.4, -1.0], &[2.0, 0.1], &[-0.3, 0.3]]);
        p.b = v(&[0.5, -0.5, 1.0]);
        let params = CellParams::Leaky(p);
        let mut h = v(&[0.3, -0.6, 0.9]);
        let mut prod = Matrix::identity(n);
        let k = 12;
        for t in 0..k {
            let x = v(&[(t as f64).sin(), (t as f64 * 0.7).cos()]);
            let j = jacobian_step(&params, &h, &x).unwrap();
            prod = j.matmul(&prod).unwrap();
            h = params.step(&h, &x).unwrap().0;
        }
        let expected = (1.0 - alpha).powi(k);
        for i in 0..n {
            for jx in 0..n {
                let e = if i == jx { expected } else { 0.0 };
                assert!((prod[(i, jx)] - e).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn validate_catches_bad_params() {
        assert!(CellParams::Leaky(LeakyParams::zeros(2, 1, 1.0, 0.0)).validate().is_err());
        assert!(CellParams::Leaky(LeakyParams::zeros(2, 1, 0.5, -1.0)).validate().is_err());
        assert!(CellParams::Gru(GruParams::zeros(2, 1, 0.0)).validate().is_ok());
        let mut bad = GatedParams::zeros(2, 1, 0.0);
        bad.u_i = Matrix::zeros(3, 3);
        assert!(CellParams::Gated(bad).validate().is_err());
    }
}
