//! Continuous-time counterparts of the cells: closed-form solutions of
//! `dh/dt = −c·h` and `dh/dt = −|h|^r·h`, their sensitivities, and a
//! forward-Euler integrator. The discrete leaky cells are the unit-step
//! Euler scheme of the corresponding vector field.

use crate::cells::{decay_term, LeakyParams};
use crate::error::{Error, Result};
use crate::math::{affine, Vector};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecayLaw {
    Exponential { rate_c: f64 },
    Polynomial { rate_r: f64 },
}

impl DecayLaw {
    pub fn exponential(rate_c: f64) -> Result<Self> {
        if !(rate_c > 0.0) {
            return Err(Error::Domain(format!("decay rate c must be > 0, got {rate_c}")));
        }
        Ok(DecayLaw::Exponential { rate_c })
    }

    pub fn polynomial(rate_r: f64) -> Result<Self> {
        if !(rate_r > 0.0) {
            return Err(Error::Domain(format!("decay rate r must be > 0, got {rate_r}")));
        }
        Ok(DecayLaw::Polynomial { rate_r })
    }

    pub fn rhs_scalar(&self, h: f64) -> f64 {
        match *self {
            DecayLaw::Exponential { rate_c } => -rate_c * h,
            DecayLaw::Polynomial { rate_r } => -decay_term(h, rate_r),
        }
    }

    /// Closed-form `h(t0 + dt)`. Negative initial values use the odd
    /// symmetry of both laws.
    pub fn solution(&self, h0: f64, dt: f64) -> Result<f64> {
        match *self {
            DecayLaw::Exponential { rate_c } => exp_decay_solution(h0, rate_c, dt),
            DecayLaw::Polynomial { rate_r } => {
                if h0 == 0.0 {
                    return Ok(0.0);
                }
                Ok(h0.signum() * poly_decay_solution(h0.abs(), rate_r, dt)?)
            }
        }
    }
}

/// A right-hand side `dh/dt = F(h)`.
pub trait VectorField {
    fn eval(&self, h: &Vector) -> Result<Vector>;
}

impl VectorField for DecayLaw {
    fn eval(&self, h: &Vector) -> Result<Vector> {
        Ok(h.map(|v| self.rhs_scalar(v)))
    }
}

/// `α(tanh(U h + W x + b) − |h|^r h)` with the input held fixed.
#[derive(Clone, Debug)]
pub struct LeakyField<'a> {
    pub params: &'a LeakyParams,
    pub x: &'a Vector,
}

impl VectorField for LeakyField<'_> {
    fn eval(&self, h: &Vector) -> Result<Vector> {
        let p = self.params;
        let pre = affine(&p.u, h, &p.w, self.x, &p.b)?;
        let r = p.rate_r;
        Ok(h.zip_map(&pre, |hv, a| {
            let decay = if r == 0.0 { hv } else { decay_term(hv, r) };
            p.alpha * (a.tanh() - decay)
        }))
    }
}

impl<F> VectorField for F
where
    F: Fn(&Vector) -> Vector,
{
    fn eval(&self, h: &Vector) -> Result<Vector> {
        Ok(self(h))
    }
}

pub fn exp_decay_solution(h0: f64, c: f64, dt: f64) -> Result<f64> {
    check_dt(dt)?;
    Ok((-c * dt).exp() * h0)
}

/// `(r·dt + h0^{−r})^{−1/r}`
pub fn poly_decay_solution(h0: f64, r: f64, dt: f64) -> Result<f64> {
    check_poly_domain(h0, r, dt)?;
    if dt == 0.0 {
        return Ok(h0);
    }
    Ok((r * dt + h0.powf(-r)).powf(-1.0 / r))
}

/// `∂h(t0 + dt)/∂h0 = (1 + r·h0^r·dt)^{−(r+1)/r}`
pub fn poly_decay_sensitivity(h0: f64, r: f64, dt: f64) -> Result<f64> {
    check_poly_domain(h0, r, dt)?;
    Ok((1.0 + r * h0.powf(r) * dt).powf(-(r + 1.0) / r))
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt >= 0.0) {
        return Err(Error::Domain(format!("elapsed time must be >= 0, got {dt}")));
    }
    Ok(())
}

fn check_poly_domain(h0: f64, r: f64, dt: f64) -> Result<()> {
    check_dt(dt)?;
    if !(h0 > 0.0) {
        return Err(Error::Domain(format!("initial state must be > 0, got {h0}")));
    }
    if !(r > 0.0) {
        return Err(Error::Domain(format!("rate r must be > 0, got {r}")));
    }
    Ok(())
}

/// Explicit Euler: returns `h_0, h_1, …, h_{n_steps}`.
pub fn euler_integrate<F: VectorField + ?Sized>(
    field: &F,
    h0: &Vector,
    step: f64,
    n_steps: usize,
) -> Result<Vec<Vector>> {
    if !(step > 0.0) {
        return Err(Error::Domain(format!("step must be > 0, got {step}")));
    }
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(h0.clone());
    for k in 0..n_steps {
        let h = &out[k];
        let f = field.eval(h)?;
        let next = h.zip_map(&f, |a, b| a + step * b);
        if !next.is_finite() {
            return Err(Error::Divergence { step: k + 1 });
        }
        out.push(next);
    }
    Ok(out)
}

/// Scalar Euler run to a final time, keeping only the last value.
pub fn euler_final(law: &DecayLaw, h0: f64, step: f64, duration: f64) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::Domain(format!("step must be > 0, got {step}")));
    }
    check_dt(duration)?;
    let n = (duration / step).round() as usize;
    let mut h = h0;
    for k in 0..n {
        h += step * law.rhs_scalar(h);
        if !h.is_finite() {
            return Err(Error::Divergence { step: k + 1 });
        }
    }
    Ok(h)
}

/// `τ = −1 / ln(1 − α)`: steps for the free leaky state to shrink by `e`.
pub fn characteristic_time(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(-1.0 / (-alpha).ln_1p())
}

/// One pass/fail line of the oracle suite.
#[derive(Clone, Debug)]
pub struct OracleCheck {
    pub name: String,
    pub worst: f64,
    pub bound: String,
    pub passed: bool,
}

/// Closed form vs Euler at one grid point.
#[derive(Clone, Debug)]
pub struct EulerErrorRow {
    pub rate_r: f64,
    pub h0: f64,
    pub dt: f64,
    pub closed_form: f64,
    pub euler: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
    pub euler_rows: Vec<EulerErrorRow>,
}

impl OracleReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Clone, Debug)]
pub struct OracleGrid {
    pub rates: Vec<f64>,
    pub initial_states: Vec<f64>,
    pub durations: Vec<f64>,
    pub euler_step: f64,
}

impl Default for OracleGrid {
    fn default() -> Self {
        OracleGrid {
            rates: vec![0.5, 1.0, 2.0, 4.0],
            initial_states: vec![0.25, 1.0, 2.0],
            durations: (0..=10).map(f64::from).collect(),
            euler_step: 1e-4,
        }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Runs the closed-form / Euler / finite-difference cross checks.
pub fn run_oracle_suite(grid: &OracleGrid) -> Result<OracleReport> {
    let mut rows = Vec::new();
    let mut worst_euler: f64 = 0.0;
    let mut worst_sens: f64 = 0.0;
    let mut worst_semigroup: f64 = 0.0;
    let fd_step = 1e-5;

    for &r in &grid.rates {
        let law = DecayLaw::polynomial(r)?;
        for &h0 in &grid.initial_states {
            // one Euler sweep, sampled at each requested duration
            let mut durations = grid.durations.clone();
            durations.sort_by(f64::total_cmp);
            let mut h = h0;
            let mut k: usize = 0;
            for &dt in &durations {
                let target = (dt / grid.euler_step).round() as usize;
                while k < target {
                    h += grid.euler_step * law.rhs_scalar(h);
                    k += 1;
                }
                let exact = poly_decay_solution(h0, r, dt)?;
                let e = rel_err(exact, h);
                worst_euler = worst_euler.max(e);
                rows.push(EulerErrorRow {
                    rate_r: r,
                    h0,
                    dt,
                    closed_form: exact,
                    euler: h,
                    rel_error: e,
                });

                let sens = poly_decay_sensitivity(h0, r, dt)?;
                let fd = (poly_decay_solution(h0 + fd_step, r, dt)?
                    - poly_decay_solution(h0 - fd_step, r, dt)?)
                    / (2.0 * fd_step);
                worst_sens = worst_sens.max(rel_err(sens, fd));

                for &s in &durations {
                    let two_leg = poly_decay_solution(poly_decay_solution(h0, r, s)?, r, dt)?;
                    let one_leg = poly_decay_solution(h0, r, s + dt)?;
                    worst_semigroup = worst_semigroup.max(rel_err(two_leg, one_leg));
                }
            }
        }
    }

    // halving the step roughly halves the global error
    let mut ratio_lo = f64::INFINITY;
    let mut ratio_hi: f64 = 0.0;
    for &r in &grid.rates {
        let law = DecayLaw::polynomial(r)?;
        let exact = poly_decay_solution(1.0, r, 1.0)?;
        let coarse = (euler_final(&law, 1.0, 1e-2, 1.0)? - exact).abs();
        let fine = (euler_final(&law, 1.0, 5e-3, 1.0)? - exact).abs();
        let ratio = coarse / fine;
        ratio_lo = ratio_lo.min(ratio);
        ratio_hi = ratio_hi.max(ratio);
    }

    let mut ordering_ok = true;
    for r in [1.0, 2.0] {
        for dt in (1..=20).map(|k| k as f64 * 0.5) {
            ordering_ok &= poly_decay_solution(1.0, r, dt)? > exp_decay_solution(1.0, 1.0, dt)?;
        }
    }

    let checks = vec![
        OracleCheck {
            name: format!("closed form vs Euler (step {:e})", grid.euler_step),
            worst: worst_euler,
            bound: "rel <= 1e-3".into(),
            passed: worst_euler <= 1e-3,
        },
        OracleCheck {
            name: "sensitivity vs central difference".into(),
            worst: worst_sens,
            bound: "rel <= 1e-7".into(),
            passed: worst_sens <= 1e-7,
        },
        OracleCheck {
            name: "semigroup composition".into(),
            worst: worst_semigroup,
            bound: "rel <= 1e-12".into(),
            passed: worst_semigroup <= 1e-12,
        },
        OracleCheck {
            name: "Euler first-order convergence ratio".into(),
            worst: if (ratio_lo - 2.0).abs() > (ratio_hi - 2.0).abs() { ratio_lo } else { ratio_hi },
            bound: "ratio in [1.8, 2.2]".into(),
            passed: ratio_lo >= 1.8 && ratio_hi <= 2.2,
        },
        OracleCheck {
            name: "polynomial decay slower than exponential".into(),
            worst: if ordering_ok { 1.0 } else { 0.0 },
            bound: "holds for r in {1,2}, dt in [1,10]".into(),
            passed: ordering_ok,
        },
    ];
    Ok(OracleReport {
        checks,
        euler_rows: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::leaky_step;
    use crate::math::Matrix;
    use proptest::prelude::*;

    #[test]
    fn exponential_closed_form() {
        assert_eq!(exp_decay_solution(1.7, 3.0, 0.0).unwrap(), 1.7);
        assert!((exp_decay_solution(1.0, 1.0, 2f64.ln()).unwrap() - 0.5).abs() < 1e-15);
        let law = DecayLaw::exponential(1.0).unwrap();
        let euler = euler_final(&law, 1.0, 1e-4, 1.0).unwrap();
        let exact = exp_decay_solution(1.0, 1.0, 1.0).unwrap();
        assert!(rel_err(euler, exact) < 1e-3);
    }

    #[test]
    fn exponential_euler_over_interval() {
        let law = DecayLaw::exponential(1.0).unwrap();
        let traj = euler_integrate(&law, &Vector::from(vec![1.0]), 1e-4, 50_000).unwrap();
        for (k, h) in traj.iter().enumerate().step_by(2500) {
            let exact = exp_decay_solution(1.0, 1.0, k as f64 * 1e-4).unwrap();
            assert!(rel_err(h[0], exact) < 1e-3, "k={k}");
        }
    }

    #[test]
    fn polynomial_closed_form() {
        assert_eq!(poly_decay_solution(0.7, 2.0, 0.0).unwrap(), 0.7);
        assert!((poly_decay_solution(1.0, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        let v = poly_decay_solution(1.0, 2.0, 1.0).unwrap();
        assert!((v - 3f64.powf(-0.5)).abs() < 1e-15);
        assert!((v - 0.57735).abs() < 1e-5);
        let law = DecayLaw::polynomial(2.0).unwrap();
        let euler = euler_final(&law, 1.0, 1e-5, 1.0).unwrap();
        assert!(rel_err(euler, v) < 1e-4);
        assert!(poly_decay_solution(0.0, 2.0, 1.0).is_err());
        assert!(poly_decay_solution(-1.0, 2.0, 1.0).is_err());
        assert!(poly_decay_solution(1.0, 2.0, -1.0).is_err());
    }

    #[test]
    fn polynomial_sensitivity() {
        assert_eq!(poly_decay_sensitivity(1.3, 2.0, 0.0).unwrap(), 1.0);
        assert!((poly_decay_sensitivity(1.0, 1.0, 1.0).unwrap() - 0.25).abs() < 1e-15);
        let s = poly_decay_sensitivity(1.0, 2.0, 1.0).unwrap();
        assert!((s - 3f64.powf(-1.5)).abs() < 1e-15);
        assert!((s - 0.19245).abs() < 1e-5);
        let step = 1e-5;
        let fd = (poly_decay_solution(1.0 + step, 2.0, 1.0).unwrap()
            - poly_decay_solution(1.0 - step, 2.0, 1.0).unwrap())
            / (2.0 * step);
        assert!((fd - s).abs() < 1e-8);
    }

    #[test]
    fn printed_sensitivity_without_rate_factor_is_off_for_r_not_one() {
        // (1 + h0^r dt)^{-(r+1)/r} agrees only when r = 1
        let printed = |h0: f64, r: f64, dt: f64| (1.0 + h0.powf(r) * dt).powf(-(r + 1.0) / r);
        assert!((printed(1.0, 1.0, 1.0) - poly_decay_sensitivity(1.0, 1.0, 1.0).unwrap()).abs() < 1e-15);
        assert!((printed(1.0, 2.0, 1.0) - poly_decay_sensitivity(1.0, 2.0, 1.0).unwrap()).abs() > 0.1);
    }

    #[test]
    fn zero_field_is_constant() {
        let zero = |h: &Vector| Vector::zeros(h.len());
        let traj = euler_integrate(&zero, &Vector::from(vec![0.3, -2.0]), 0.1, 20).unwrap();
        assert!(traj.iter().all(|h| h == &Vector::from(vec![0.3, -2.0])));
        assert!(euler_integrate(&zero, &Vector::zeros(1), 0.0, 1).is_err());
    }

    #[test]
    fn unit_step_euler_is_the_leaky_cell() {
        for rate in [0.0, 2.0, 0.5] {
            let mut p = LeakyParams::zeros(3, 2, 0.3, rate);
            p.u = Matrix::from_rows(&[&[0.1, -0.4, 0.2], &[0.3, 0.0, -0.1], &[0.5, 0.2, 0.1]]);
            p.w = Matrix::from_rows(&[&[1.0, -1.0], &[0.2, 0.4], &[-0.7, 0.3]]);
            p.b = Vector::from(vec![0.1, 0.0, -0.2]);
            let x = Vector::from(vec![0.6, -0.25]);
            let h0 = Vector::from(vec![0.4, -0.9, 0.05]);
            let field = LeakyField { params: &p, x: &x };
            let euler = euler_integrate(&field, &h0, 1.0, 1).unwrap();
            let (cell, _) = leaky_step(&p, &h0, &x).unwrap();
            assert_eq!(euler[1], cell, "rate {rate}");
        }
    }

    #[test]
    fn characteristic_times() {
        assert_eq!(characteristic_time(1.0 - (-1f64).exp()).unwrap(), 1.0);
        assert!((characteristic_time(0.5).unwrap() - 1.0 / 2f64.ln()).abs() < 1e-15);
        let tau = characteristic_time(0.01).unwrap();
        assert!((tau - 99.50).abs() < 0.01);
        assert!((tau * 0.01 - 1.0).abs() < 0.01);
        assert!(characteristic_time(0.0).is_err());
        assert!(characteristic_time(1.0).is_err());
    }

    #[test]
    fn negative_states_use_odd_symmetry() {
        let law = DecayLaw::polynomial(2.0).unwrap();
        let pos = law.solution(0.8, 3.0).unwrap();
        assert_eq!(law.solution(-0.8, 3.0).unwrap(), -pos);
        assert_eq!(law.solution(0.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn default_suite_passes() {
        let grid = OracleGrid {
            euler_step: 1e-3,
            ..OracleGrid::default()
        };
        let report = run_oracle_suite(&grid).unwrap();
        for c in &report.checks {
            if c.name.starts_with("closed form") {
                continue;
            }
            assert!(c.passed, "{c:?}");
        }
    }

    proptest! {
        #[test]
        fn semigroup(h0 in 0.01f64..2.0, ri in 0usize..4, s in 0.0f64..10.0, t in 0.0f64..10.0) {
            let r = [0.5, 1.0, 2.0, 4.0][ri];
            let a = poly_decay_solution(poly_decay_solution(h0, r, s).unwrap(), r, t).unwrap();
            let b = poly_decay_solution(h0, r, s + t).unwrap();
            prop_assert!(rel_err(a, b) <= 1e-12);
        }

        #[test]
        fn sensitivity_matches_fd(h0 in 0.05f64..2.0, ri in 0usize..4, dt in 0.0f64..10.0) {
            let r = [0.5, 1.0, 2.0, 4.0][ri];
            let step = 1e-5 * h0.max(0.1);
            let fd = (poly_decay_solution(h0 + step, r, dt).unwrap()
                - poly_decay_solution(h0 - step, r, dt).unwrap()) / (2.0 * step);
            let s = poly_decay_sensitivity(h0, r, dt).unwrap();
            prop_assert!(rel_err(s, fd) <= 1e-7, "h0={} r={} dt={} s={} fd={}", h0, r, dt, s, fd);
        }

        #[test]
        fn polynomial_outlasts_exponential(ri in 0usize..2, dt in 1.0f64..30.0) {
            let r = [1.0, 2.0][ri];
            prop_assert!(poly_decay_solution(1.0, r, dt).unwrap() > exp_decay_solution(1.0, 1.0, dt).unwrap());
        }
    }
}
