//! Mollified Picard iteration for the rank-one normal form.
//!
//! Each stage solves the linear decoupled problem with coefficients frozen on
//! the whole previous trajectory over `[0, T*]`, started from the mollified
//! data `z^ℓ`.

use serde::{Deserialize, Serialize};

use super::integrate::auto_dt;
use super::normal::{apply_rank1_linear, Rank1Frozen, Rank1Operator};
use super::ops::gradient;
use super::run::{field_to_w, sobolev_index};
use super::{Dynamics, Scheme, SolverConfig, SolverError};
use crate::grid::{mollify_with, FieldState, Grid, Spectral};
use crate::model::{canonical_relabel, SystemSpec};
use crate::normal_form::transport_rank1;
use crate::transforms::aggregate_equal_k;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardRecord {
    pub iter: usize,
    /// `sup_t ‖w^ℓ - w^{ℓ-1}‖_{L²}`.
    pub sup_l2_increment: f64,
    /// `(∫ ‖∇(w^ℓ_n - w^{ℓ-1}_n)‖²_{L²} dt)^{1/2}`.
    pub parabolic_gradient_increment: f64,
    /// `N^ℓ`, the sum of the two increments.
    pub n_ell: f64,
    pub max_hs_norm: f64,
    pub min_wn: f64,
    /// `N^ℓ / N^{ℓ-1}`.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardTrace {
    pub records: Vec<PicardRecord>,
    /// Final stage horizon `T*`.
    pub horizon: f64,
    pub restarts: usize,
    pub k_factor: f64,
    /// `R = ‖w^in‖_{H^s}`.
    pub r_norm: f64,
    /// `r = min w^in_n`.
    pub r_min: f64,
    pub s: u32,
    pub dt: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub converged: bool,
}

impl PicardTrace {
    /// Working bound `K R`.
    pub fn bound(&self) -> f64 {
        self.k_factor * self.r_norm
    }
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    /// Stage time grid.
    pub times: Vec<f64>,
    /// Last iterate on the stage grid.
    pub trajectory: Vec<Vec<Vec<f64>>>,
    pub trace: PicardTrace,
}

/// Solves the linear stage with coefficients frozen along `v_traj` (one state
/// per stage time, uniform step `dt`) from the initial field `z`.
pub fn picard_stage(
    op: &mut Rank1Operator,
    v_traj: &[Vec<Vec<f64>>],
    z: &[Vec<f64>],
    dt: f64,
) -> Result<Vec<Vec<Vec<f64>>>, SolverError> {
    let grid = *op.grid();
    let n = z.len();
    let frozen_at = |op: &mut Rank1Operator, v: &[Vec<f64>]| -> Result<(Rank1Frozen, Vec<Vec<f64>>), SolverError> {
        let f = op.coefficients(v)?;
        let g = gradient(&grid, op.spectral(), &v[n - 1]);
        Ok((f, g))
    };
    let mut out = Vec::with_capacity(v_traj.len());
    out.push(z.to_vec());
    let mut k1 = vec![vec![0.0; grid.points()]; n];
    let mut k2 = k1.clone();
    let mut current = frozen_at(op, &v_traj[0])?;
    for j in 0..v_traj.len().saturating_sub(1) {
        let next = frozen_at(op, &v_traj[j + 1])?;
        let w = &out[j];
        apply_rank1_linear(&grid, op.spectral(), op.dissipation(), &current.0, &current.1, w, &mut k1);
        let stage: Vec<Vec<f64>> = w
            .iter()
            .zip(&k1)
            .map(|(wc, kc)| wc.iter().zip(kc).map(|(a, b)| a + dt * b).collect())
            .collect();
        apply_rank1_linear(&grid, op.spectral(), op.dissipation(), &next.0, &next.1, &stage, &mut k2);
        let new: Vec<Vec<f64>> = w
            .iter()
            .zip(&stage)
            .zip(&k2)
            .map(|((wc, sc), kc)| {
                wc.iter()
                    .zip(sc)
                    .zip(kc)
                    .map(|((a, b), c)| 0.5 * (a + b + dt * c))
                    .collect()
            })
            .collect();
        if new.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SolverError::DomainExit {
                time: (j + 1) as f64 * dt,
                detail: "non-finite Picard iterate".into(),
            });
        }
        out.push(new);
        current = next;
    }
    Ok(out)
}

struct Increment {
    sup_l2: f64,
    grad: f64,
}

fn increment(grid: &Grid, spectral: Option<&Spectral>, a: &[Vec<Vec<f64>>], b: &[Vec<Vec<f64>>], dt: f64) -> Increment {
    let n = a[0].len();
    let mut sup_l2: f64 = 0.0;
    let mut grad_sq = 0.0;
    for (j, (x, y)) in a.iter().zip(b).enumerate() {
        let diff: Vec<Vec<f64>> = x
            .iter()
            .zip(y)
            .map(|(p, q)| p.iter().zip(q).map(|(u, v)| u - v).collect())
            .collect();
        let l2 = diff.iter().map(|c| grid.l2_norm(c).powi(2)).sum::<f64>().sqrt();
        sup_l2 = sup_l2.max(l2);
        if j > 0 {
            let g = gradient(grid, spectral, &diff[n - 1]);
            grad_sq += dt * g.iter().map(|c| grid.l2_norm(c).powi(2)).sum::<f64>();
        }
    }
    Increment {
        sup_l2,
        grad: grad_sq.sqrt(),
    }
}

/// Runs the iteration for a rank-one system until `N^ℓ` drops below the
/// configured tolerance or the iteration budget is spent.
pub fn run_picard(spec: &SystemSpec, u0: &FieldState, cfg: &SolverConfig) -> Result<PicardOutcome, SolverError> {
    if !spec.is_rank1() {
        return Err(SolverError::Unsupported(
            "the Picard iteration is implemented for rank-one systems".into(),
        ));
    }
    let grid = u0.grid;
    let (spec_c, perm) = canonical_relabel(spec);
    let agg = aggregate_equal_k(&spec_c, &perm.apply(&u0.comps));
    let spec_r = agg.reduced_spec;
    let w_in = field_to_w(&spec_r, &grid, &agg.reduced_field)?;
    let n = spec_r.n;
    let k = spec_r.k().expect("rank-one").to_vec();
    let a = spec_r.a().expect("rank-one").to_vec();
    let sp = Spectral::new(grid);
    let s = sobolev_index(grid.d);
    let hs = |w: &[Vec<f64>]| w.iter().map(|c| sp.sobolev_norm(c, s).powi(2)).sum::<f64>().sqrt();

    let r_norm = hs(&w_in);
    let r_min = w_in[n - 1].iter().copied().fold(f64::INFINITY, f64::min);
    let (mut lambda_min, mut lambda_max) = (1.0_f64, 1.0_f64);
    let mut ut = vec![0.0; n];
    for p in 0..grid.points() {
        for i in 0..n {
            ut[i] = a[i] * agg.reduced_field[i][p];
        }
        let t = transport_rank1(&ut, &k, true)?;
        for &v in t.a0_diag.iter() {
            lambda_min = lambda_min.min(v);
            lambda_max = lambda_max.max(v);
        }
    }
    let k_factor = cfg
        .picard
        .kr_factor
        .unwrap_or_else(|| 2.0 * (lambda_max / lambda_min).sqrt());

    let mut op = Rank1Operator::new(&spec_r, grid, cfg.derivative, cfg.dissipation)?;
    let mut scratch = vec![vec![0.0; grid.points()]; n];
    let rates = op.rhs(&w_in, &mut scratch)?;
    let explicit = SolverConfig {
        scheme: Scheme::ExplicitRk2,
        ..cfg.clone()
    };
    let dt0 = 0.8 * auto_dt(rates, &grid, &explicit);
    if !dt0.is_finite() && cfg.picard.stage_horizon.is_none() {
        return Err(SolverError::BadConfig(
            "stationary data: set picard.stage_horizon explicitly".into(),
        ));
    }
    let mut horizon = cfg.picard.stage_horizon.unwrap_or(50.0 * dt0);
    let mut restarts = 0;
    let z: Vec<Vec<Vec<f64>>> = (0..=cfg.picard.max_iters)
        .map(|l| w_in.iter().map(|c| mollify_with(&sp, c, l as u32)).collect())
        .collect();

    loop {
        let steps = if dt0.is_finite() { (horizon / dt0).ceil().max(1.0) as usize } else { 1 };
        let dt = horizon / steps as f64;
        if horizon < dt0 {
            return Err(SolverError::NoContraction { horizon, dt: dt0 });
        }
        let times: Vec<f64> = (0..=steps).map(|j| j as f64 * dt).collect();
        let mut prev: Vec<Vec<Vec<f64>>> = vec![z[0].clone(); steps + 1];
        let mut records = Vec::new();
        let mut violated = false;
        let mut converged = false;
        for l in 1..=cfg.picard.max_iters {
            let min_v = prev
                .iter()
                .flat_map(|w| w[n - 1].iter().copied())
                .fold(f64::INFINITY, f64::min);
            if min_v < 0.5 * r_min {
                return Err(SolverError::DomainExit {
                    time: f64::NAN,
                    detail: format!("Picard iterate {} has min w_n = {min_v:e} below r/2", l - 1),
                });
            }
            let next = picard_stage(&mut op, &prev, &z[l], dt)?;
            let inc = increment(&grid, op.spectral(), &next, &prev, dt);
            let n_ell = inc.sup_l2 + inc.grad;
            let max_hs = next.iter().map(|w| hs(w)).fold(0.0, f64::max);
            let min_wn = next
                .iter()
                .flat_map(|w| w[n - 1].iter().copied())
                .fold(f64::INFINITY, f64::min);
            let ratio = records.last().map(|r: &PicardRecord| n_ell / r.n_ell);
            records.push(PicardRecord {
                iter: l,
                sup_l2_increment: inc.sup_l2,
                parabolic_gradient_increment: inc.grad,
                n_ell,
                max_hs_norm: max_hs,
                min_wn,
                ratio,
            });
            prev = next;
            if max_hs >= k_factor * r_norm {
                violated = true;
                break;
            }
            if n_ell <= cfg.picard.contraction_tol {
                converged = true;
                break;
            }
        }
        if violated {
            horizon *= 0.5;
            restarts += 1;
            continue;
        }
        return Ok(PicardOutcome {
            times,
            trajectory: prev,
            trace: PicardTrace {
                records,
                horizon,
                restarts,
                k_factor,
                r_norm,
                r_min,
                s,
                dt,
                lambda_min,
                lambda_max,
                converged,
            },
        });
    }
}
