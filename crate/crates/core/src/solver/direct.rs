//! Right-hand side of the original system `∂t u_i = div(u_i ∇(M u)_i)`.

use std::ops::Range;

use nalgebra::DMatrix;

use super::ops::add_flux_divergence;
use super::{Dynamics, ParabolicCoeffs, Rates, SolverError};
use crate::grid::{DerivativeScheme, Grid, Spectral};
use crate::model::{SystemKind, SystemSpec};

/// `∂t u` for the gridded densities `u` (one array per species).
pub fn rhs_direct(
    grid: &Grid,
    u: &[Vec<f64>],
    spec: &SystemSpec,
    scheme: DerivativeScheme,
) -> Result<Vec<Vec<f64>>, SolverError> {
    let mut op = DirectOperator::new(spec, *grid, scheme);
    let mut out = vec![vec![0.0; grid.points()]; spec.n];
    op.rhs(u, &mut out)?;
    Ok(out)
}

pub struct DirectOperator {
    grid: Grid,
    n: usize,
    m: DMatrix<f64>,
    spectral: Option<Spectral>,
    /// Upper bound for the largest eigenvalue of `D(u) M` per unit density.
    rate_scale: Option<f64>,
    a_k: Option<Vec<f64>>,
    mu: Vec<Vec<f64>>,
}

impl DirectOperator {
    pub fn new(spec: &SystemSpec, grid: Grid, scheme: DerivativeScheme) -> Self {
        let m = spec.potential_matrix();
        let (rate_scale, a_k) = match &spec.kind {
            SystemKind::Rank1 { k, a } => (None, Some(k.iter().zip(a).map(|(k, a)| k * a).collect())),
            SystemKind::General { b } => {
                let lmax = b.clone().symmetric_eigenvalues().max();
                (Some(lmax), None)
            }
        };
        Self {
            grid,
            n: spec.n,
            m,
            spectral: (scheme == DerivativeScheme::Spectral).then(|| Spectral::new(grid)),
            rate_scale,
            a_k,
            mu: vec![vec![0.0; grid.points()]; spec.n],
        }
    }
}

impl Dynamics for DirectOperator {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn n_comps(&self) -> usize {
        self.n
    }

    fn rhs(&mut self, u: &[Vec<f64>], out: &mut [Vec<f64>]) -> Result<Rates, SolverError> {
        let points = self.grid.points();
        let mut a_max: f64 = 0.0;
        for p in 0..points {
            for i in 0..self.n {
                let v = u[i][p];
                if !(v > 0.0) || !v.is_finite() {
                    return Err(SolverError::NonPositiveDensity {
                        comp: i,
                        point: p,
                        value: v,
                    });
                }
            }
            for i in 0..self.n {
                self.mu[i][p] = (0..self.n).map(|j| self.m[(i, j)] * u[j][p]).sum();
            }
            let rate = match (&self.a_k, self.rate_scale) {
                (Some(ak), _) => (0..self.n).map(|i| ak[i] * u[i][p]).sum(),
                (None, Some(l)) => l * (0..self.n).map(|i| u[i][p]).fold(0.0, f64::max),
                _ => 0.0,
            };
            a_max = a_max.max(rate);
        }
        for i in 0..self.n {
            out[i].iter_mut().for_each(|v| *v = 0.0);
            add_flux_divergence(&self.grid, self.spectral.as_ref(), &u[i], &self.mu[i], &mut out[i], 1.0);
        }
        Ok(Rates { v_max: 0.0, a_max })
    }

    fn densities(&mut self, state: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SolverError> {
        Ok(state.to_vec())
    }

    fn parabolic_block(&self) -> Range<usize> {
        0..self.n
    }

    fn parabolic_coefficients(&mut self, _state: &[Vec<f64>]) -> Result<ParabolicCoeffs, SolverError> {
        Err(SolverError::Unsupported(
            "implicit stepping is only available for the normal-form solver".into(),
        ))
    }
}
