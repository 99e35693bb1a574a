//! Linearly implicit Rosenbrock 2(3) integrator with adaptive steps.
//!
//! The pair is the L-stable modified Rosenbrock formula of Shampine and
//! Reichelt. Its second-order solution is a W-formula, so the Jacobian can be
//! held across several steps and is only refreshed after a rejection or after
//! `jacobian_reuse` accepted steps.

use nalgebra::{DMatrix, DVector, LU, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A first-order system `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
    pub max_step: f64,
    pub min_step: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rel: 1e-3, abs: 1e-4, max_step: 0.01, min_step: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverStats {
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub jacobians: usize,
    pub factorizations: usize,
}

pub struct Rosenbrock23 {
    tol: Tolerances,
    /// Accepted steps a Jacobian may be reused for.
    pub jacobian_reuse: usize,
    h: Option<f64>,
    jac: Option<DMatrix<f64>>,
    dfdt: Vec<f64>,
    jac_age: usize,
    lu: Option<(f64, LU<f64, Dyn, Dyn>)>,
    f0: Option<Vec<f64>>,
    stats: SolverStats,
}

const D: f64 = 0.292_893_218_813_452_4; // 1 / (2 + √2)
const E32: f64 = 7.414_213_562_373_095; // 6 + √2

impl Rosenbrock23 {
    pub fn new(tol: Tolerances) -> Self {
        Self {
            tol,
            jacobian_reuse: 8,
            h: None,
            jac: None,
            dfdt: Vec::new(),
            jac_age: 0,
            lu: None,
            f0: None,
            stats: SolverStats::default(),
        }
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    pub fn stats(&self) -> SolverStats {
        self.stats
    }

    /// Forget cached derivative data, e.g. after the system's inputs changed.
    pub fn invalidate_rhs(&mut self) {
        self.f0 = None;
    }

    fn eval<S: OdeSystem>(&mut self, sys: &S, t: f64, y: &[f64], out: &mut [f64]) {
        self.stats.rhs_evals += 1;
        sys.rhs(t, y, out);
    }

    fn refresh_jacobian<S: OdeSystem>(&mut self, sys: &S, t: f64, y: &[f64], f0: &[f64]) {
        let n = y.len();
        let mut jac = self.jac.take().unwrap_or_else(|| DMatrix::zeros(n, n));
        let mut yp = y.to_vec();
        let mut fp = vec![0.0; n];
        for j in 0..n {
            let delta = 1e-8 * y[j].abs().max(1.0);
            yp[j] = y[j] + delta;
            self.eval(sys, t, &yp, &mut fp);
            for i in 0..n {
                jac[(i, j)] = (fp[i] - f0[i]) / delta;
            }
            yp[j] = y[j];
        }
        let dt = 1e-8 * t.abs().max(1.0);
        self.eval(sys, t + dt, y, &mut fp);
        self.dfdt.resize(n, 0.0);
        for i in 0..n {
            self.dfdt[i] = (fp[i] - f0[i]) / dt;
        }
        self.jac = Some(jac);
        self.jac_age = 0;
        self.lu = None;
        self.stats.jacobians += 1;
    }

    fn factor(&mut self, h: f64) {
        if matches!(&self.lu, Some((hh, _)) if *hh == h) {
            return;
        }
        let jac = self.jac.as_ref().expect("jacobian available");
        let n = jac.nrows();
        let mut w = jac * (-h * D);
        for i in 0..n {
            w[(i, i)] += 1.0;
        }
        self.lu = Some((h, w.lu()));
        self.stats.factorizations += 1;
    }

    fn solve_w(&self, rhs: &mut DVector<f64>) {
        let (_, lu) = self.lu.as_ref().expect("factorized");
        lu.solve_mut(rhs);
    }

    /// Advances `y` from `*t` to exactly `t_end`.
    pub fn advance<S: OdeSystem>(&mut self, sys: &S, t: &mut f64, y: &mut [f64], t_end: f64) -> Result<()> {
        let n = y.len();
        let span = t_end - *t;
        if span <= 0.0 {
            return Ok(());
        }
        let mut f0 = match self.f0.take() {
            Some(f) if f.len() == n => f,
            _ => {
                let mut f = vec![0.0; n];
                self.eval(sys, *t, y, &mut f);
                f
            }
        };
        let mut h = self.h.unwrap_or_else(|| {
            // Hairer–Nørsett–Wanner starting step from scaled RMS norms
            let rms = |v: &[f64]| {
                let s: f64 = v.iter().zip(y.iter()).map(|(a, yi)| (a / (self.tol.abs + self.tol.rel * yi.abs())).powi(2)).sum();
                (s / n as f64).sqrt()
            };
            let (d0, d1) = (rms(y), rms(&f0));
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            h0.min(self.tol.max_step).max(self.tol.min_step)
        });
        if self.jac.as_ref().is_none_or(|j| j.nrows() != n) || self.jac_age >= self.jacobian_reuse {
            self.refresh_jacobian(sys, *t, y, &f0);
        }

        let mut f1 = vec![0.0; n];
        let mut f2 = vec![0.0; n];
        let mut ytmp = vec![0.0; n];
        let mut ynew = vec![0.0; n];
        loop {
            let remaining = t_end - *t;
            if remaining <= 0.0 {
                break;
            }
            h = h.min(self.tol.max_step);
            let last = h >= remaining * (1.0 - 1e-12);
            let hs = if last { remaining } else { h };
            if hs < self.tol.min_step {
                self.f0 = None;
                return Err(Error::StepSizeUnderflow { t: *t, h: hs });
            }
            self.factor(hs);

            let mut k1 = DVector::from_fn(n, |i, _| f0[i] + hs * D * self.dfdt[i]);
            self.solve_w(&mut k1);
            for i in 0..n {
                ytmp[i] = y[i] + 0.5 * hs * k1[i];
            }
            self.eval(sys, *t + 0.5 * hs, &ytmp, &mut f1);
            let mut k2 = DVector::from_fn(n, |i, _| f1[i] - k1[i]);
            self.solve_w(&mut k2);
            k2 += &k1;
            for i in 0..n {
                ynew[i] = y[i] + hs * k2[i];
            }
            self.eval(sys, *t + hs, &ynew, &mut f2);
            let mut k3 = DVector::from_fn(n, |i, _| {
                f2[i] - E32 * (k2[i] - f1[i]) - 2.0 * (k1[i] - f0[i]) + hs * D * self.dfdt[i]
            });
            self.solve_w(&mut k3);

            let mut err = 0.0_f64;
            for i in 0..n {
                let e = hs / 6.0 * (k1[i] - 2.0 * k2[i] + k3[i]);
                let sc = self.tol.abs.max(self.tol.rel * y[i].abs().max(ynew[i].abs()));
                let r = (e / sc).abs();
                if r.is_nan() {
                    err = f64::INFINITY;
                    break;
                }
                err = err.max(r);
            }

            if err <= 1.0 {
                self.stats.steps += 1;
                self.jac_age += 1;
                *t = if last { t_end } else { *t + hs };
                y.copy_from_slice(&ynew);
                std::mem::swap(&mut f0, &mut f2);
                let grow = if err == 0.0 { 5.0 } else { (0.8 * err.powf(-1.0 / 3.0)).min(5.0) };
                // a step clipped to the interval end keeps the unclipped proposal
                h = if last { h.max(hs * grow) } else { hs * grow };
                if last {
                    break;
                }
            } else {
                self.stats.rejected += 1;
                let shrink = if err.is_finite() { (0.8 * err.powf(-1.0 / 3.0)).max(0.1) } else { 0.1 };
                h = hs * shrink;
                if self.jac_age > 0 {
                    self.refresh_jacobian(sys, *t, y, &f0);
                }
            }
        }
        self.h = Some(h.min(self.tol.max_step));
        self.f0 = Some(f0);
        Ok(())
    }
}

/// Samples of an integration at a fixed reporting interval.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub failure: Option<String>,
}

/// Integrates `sys` over `t_span` seconds and reports the state every
/// `report_dt` seconds (the initial state included). A zero-length span
/// returns no samples.
pub fn integrate<S: OdeSystem>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_span: f64,
    tol: Tolerances,
    report_dt: f64,
) -> Trajectory {
    let mut traj = Trajectory::default();
    if t_span <= 0.0 {
        return traj;
    }
    let mut solver = Rosenbrock23::new(tol);
    let mut y = y0.to_vec();
    let mut t = t0;
    traj.times.push(t);
    traj.states.push(y.clone());
    let n_reports = (t_span / report_dt).round() as usize;
    for k in 1..=n_reports {
        let t_next = t0 + k as f64 * report_dt;
        if let Err(e) = solver.advance(sys, &mut t, &mut y, t_next) {
            traj.failure = Some(e.to_string());
            break;
        }
        traj.times.push(t);
        traj.states.push(y.clone());
    }
    traj
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Ballistic;
    impl OdeSystem for Ballistic {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[1];
            dy[1] = -9.81;
        }
    }

    struct StiffCosine;
    impl OdeSystem for StiffCosine {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = -1e4 * (y[0] - t.cos());
        }
    }

    #[test]
    fn ballistic_matches_closed_form() {
        let tol = Tolerances::default();
        let traj = integrate(&Ballistic, 0.0, &[2.0, 0.0], 1.0, tol, 0.001);
        assert!(traj.failure.is_none());
        assert_eq!(traj.times.len(), 1001);
        for (t, y) in traj.times.iter().zip(&traj.states) {
            let exact = 2.0 - 0.5 * 9.81 * t * t;
            assert!((y[0] - exact).abs() < tol.abs, "t={t} y={} exact={exact}", y[0]);
        }
    }

    #[test]
    fn stiff_cosine_tracks_slow_manifold() {
        // closed form: x(t) = c·cos t + c·1e-4·sin t − c·e^{-1e4 t}, c = 1e8/(1e8+1)
        let tol = Tolerances::default();
        let traj = integrate(&StiffCosine, 0.0, &[0.0], 2.0, tol, 0.01);
        assert!(traj.failure.is_none());
        let c = 1e8 / (1e8 + 1.0);
        for (t, y) in traj.times.iter().zip(&traj.states).skip(1) {
            let exact = c * t.cos() + c * 1e-4 * t.sin() - c * (-1e4 * t).exp();
            assert!((y[0] - exact).abs() < 1e-3, "t={t}: {} vs {exact}", y[0]);
        }
    }

    #[test]
    fn steps_never_exceed_max_step() {
        let tol = Tolerances::default();
        let mut solver = Rosenbrock23::new(tol);
        let mut y = vec![0.0];
        let mut t = 0.0;
        solver.advance(&StiffCosine, &mut t, &mut y, 1.0).unwrap();
        assert!(solver.stats().steps >= 100, "{:?}", solver.stats());
        assert_eq!(t, 1.0);
    }

    #[test]
    fn zero_span_returns_no_samples() {
        let traj = integrate(&Ballistic, 0.0, &[1.0, 0.0], 0.0, Tolerances::default(), 0.001);
        assert!(traj.times.is_empty());
        assert!(traj.failure.is_none());
    }

    #[test]
    fn underflow_is_reported() {
        struct Blowup;
        impl OdeSystem for Blowup {
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
                dy[0] = y[0] * y[0] * 1e6;
            }
        }
        let traj = integrate(&Blowup, 0.0, &[1.0], 1.0, Tolerances::default(), 0.01);
        assert!(traj.failure.is_some());
    }

    #[test]
    fn deterministic() {
        let a = integrate(&StiffCosine, 0.0, &[0.3], 0.5, Tolerances::default(), 0.001);
        let b = integrate(&StiffCosine, 0.0, &[0.3], 0.5, Tolerances::default(), 0.001);
        assert_eq!(a.states, b.states);
    }
}
