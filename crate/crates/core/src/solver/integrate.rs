//! Explicit RK2 (Heun) and IMEX time steps.

use super::ops::add_flux_divergence;
use super::{Dynamics, ParabolicCoeffs, Rates, Scheme, SolverConfig, SolverError, TimeStep};
use crate::grid::Grid;

/// `min(cfl_hyp dx / V_max, diff_number dx² / (d a_max))` for explicit stepping,
/// `cfl_hyp dx / V_max` for IMEX. Infinite when the relevant rates vanish.
pub fn auto_dt(rates: Rates, grid: &Grid, cfg: &SolverConfig) -> f64 {
    let dx = grid.dx();
    let hyp = if rates.v_max > 0.0 {
        cfg.cfl_hyp * dx / rates.v_max
    } else {
        f64::INFINITY
    };
    match cfg.scheme {
        Scheme::Imex => hyp,
        Scheme::ExplicitRk2 => {
            let par = if rates.a_max > 0.0 {
                cfg.diff_number * dx * dx / (grid.d as f64 * rates.a_max)
            } else {
                f64::INFINITY
            };
            hyp.min(par)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub dt: f64,
    /// Rates at the start of the step.
    pub rates: Rates,
}

/// Reusable stepping buffers for one [`Dynamics`].
pub struct Integrator {
    scheme: Scheme,
    k1: Vec<Vec<f64>>,
    k2: Vec<Vec<f64>>,
    stage: Vec<Vec<f64>>,
}

impl Integrator {
    pub fn new(dynamics: &dyn Dynamics, scheme: Scheme) -> Self {
        let buf = vec![vec![0.0; dynamics.grid().points()]; dynamics.n_comps()];
        Self {
            scheme,
            k1: buf.clone(),
            k2: buf.clone(),
            stage: buf,
        }
    }

    /// Advances `state` by one step. The step size is `cfg.dt` or the automatic
    /// choice, capped by `max_dt`.
    pub fn advance(
        &mut self,
        dynamics: &mut dyn Dynamics,
        state: &mut [Vec<f64>],
        cfg: &SolverConfig,
        max_dt: f64,
    ) -> Result<StepOutcome, SolverError> {
        let rates = dynamics.rhs(state, &mut self.k1)?;
        let dt = match cfg.dt {
            TimeStep::Fixed(v) => v,
            TimeStep::Auto => auto_dt(rates, dynamics.grid(), cfg),
        }
        .min(max_dt);
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(SolverError::StepRejected { time: f64::NAN, dt });
        }
        match self.scheme {
            Scheme::ExplicitRk2 => self.heun_from_k1(dynamics, state, dt)?,
            Scheme::Imex => self.imex_from_k1(dynamics, state, dt)?,
        }
        Ok(StepOutcome { dt, rates })
    }

    fn heun_from_k1(&mut self, dynamics: &mut dyn Dynamics, state: &mut [Vec<f64>], dt: f64) -> Result<(), SolverError> {
        for ((s, w), k) in self.stage.iter_mut().zip(state.iter()).zip(&self.k1) {
            for ((sv, wv), kv) in s.iter_mut().zip(w).zip(k) {
                *sv = wv + dt * kv;
            }
        }
        dynamics.rhs(&self.stage, &mut self.k2)?;
        for ((w, s), k) in state.iter_mut().zip(&self.stage).zip(&self.k2) {
            for ((wv, sv), kv) in w.iter_mut().zip(s).zip(k) {
                *wv = 0.5 * (*wv + sv + dt * kv);
            }
        }
        Ok(())
    }

    fn imex_from_k1(&mut self, dynamics: &mut dyn Dynamics, state: &mut [Vec<f64>], dt: f64) -> Result<(), SolverError> {
        let block = dynamics.parabolic_block();
        let coeffs = dynamics.parabolic_coefficients(state)?;
        let grid = *dynamics.grid();
        for (c, (w, k)) in state.iter_mut().zip(&self.k1).enumerate() {
            if !block.contains(&c) {
                for (wv, kv) in w.iter_mut().zip(k) {
                    *wv += dt * kv;
                }
            }
        }
        let points = grid.points();
        let r = block.len();
        let mut b = vec![0.0; r * points];
        let mut x0 = vec![0.0; r * points];
        for k in 0..r {
            for p in 0..points {
                b[k * points + p] = coeffs.lhs[k] * state[block.start + k][p];
                x0[k * points + p] = state[block.start + k][p];
            }
        }
        let apply = |x: &[f64], y: &mut [f64]| implicit_operator(&grid, &coeffs, dt, x, y);
        let (x, _, res) = cg_solve(apply, &b, &x0, 1e-10, 20 * r * points + 100);
        if !(res <= 1e-10) {
            return Err(SolverError::StepRejected { time: f64::NAN, dt });
        }
        for k in 0..r {
            state[block.start + k].copy_from_slice(&x[k * points..(k + 1) * points]);
        }
        Ok(())
    }
}

/// `y = D x - dt Σ_l div(c_kl ∇x_l)`, symmetric positive definite.
fn implicit_operator(grid: &Grid, coeffs: &ParabolicCoeffs, dt: f64, x: &[f64], y: &mut [f64]) {
    let points = grid.points();
    let r = coeffs.lhs.len();
    for k in 0..r {
        let yk = &mut y[k * points..(k + 1) * points];
        for (yv, xv) in yk.iter_mut().zip(&x[k * points..(k + 1) * points]) {
            *yv = coeffs.lhs[k] * xv;
        }
        for l in 0..r {
            add_flux_divergence(grid, None, &coeffs.coeff[k][l], &x[l * points..(l + 1) * points], yk, -dt);
        }
    }
}

/// Conjugate gradients for an SPD operator; returns `(x, iterations, relative residual)`.
pub fn cg_solve(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, usize, f64) {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let bnorm = dot(b, b).sqrt().max(f64::MIN_POSITIVE);
    let mut x = x0.to_vec();
    let mut ax = vec![0.0; b.len()];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut ap = vec![0.0; b.len()];
    for it in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            return (x, it, rr.sqrt() / bnorm);
        }
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    (x, max_iter, rr.sqrt() / bnorm)
}

/// One step with a given `dt`.
pub fn step(
    dynamics: &mut dyn Dynamics,
    state: &mut [Vec<f64>],
    cfg: &SolverConfig,
    dt: f64,
) -> Result<StepOutcome, SolverError> {
    let mut integ = Integrator::new(dynamics, cfg.scheme);
    let fixed = SolverConfig {
        dt: TimeStep::Fixed(dt),
        ..cfg.clone()
    };
    integ.advance(dynamics, state, &fixed, dt)
}
