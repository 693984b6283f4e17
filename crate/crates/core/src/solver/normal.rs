//! Right-hand sides of the normal forms on the grid.
//!
//! Hyperbolic components use pointwise coefficients in non-conservative form
//! with centered derivatives and optional fourth-order dissipation; parabolic
//! components use the conservative stencil of [`add_flux_divergence`].

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use super::ops::{add_flux_divergence, add_hyperdissipation, gradient};
use super::{Dynamics, ParabolicCoeffs, Rates, SolverError};
use crate::grid::{DerivativeScheme, Grid, Spectral};
use crate::model::{SystemKind, SystemSpec};
use crate::normal_form::{hyperbolic_velocity_general, lower_order_at, sigma_matrix, transport_rank1};
use crate::spectral_structure::{eigenstructure_default, EigenStructure};
use crate::transforms::{psi_general_with, InversionOptions, PointW, Rank1Map, Variant};

/// `∂t w` for a gridded normal-form state (hyperbolic components first).
pub fn rhs_normal_form(
    grid: &Grid,
    w: &[Vec<f64>],
    spec: &SystemSpec,
    scheme: DerivativeScheme,
    dissipation: f64,
) -> Result<Vec<Vec<f64>>, SolverError> {
    let mut op = normal_form_operator(spec, *grid, scheme, dissipation)?;
    let mut out = vec![vec![0.0; grid.points()]; w.len()];
    op.rhs(w, &mut out)?;
    Ok(out)
}

pub fn normal_form_operator(
    spec: &SystemSpec,
    grid: Grid,
    scheme: DerivativeScheme,
    dissipation: f64,
) -> Result<Box<dyn Dynamics + Send>, SolverError> {
    Ok(match &spec.kind {
        SystemKind::Rank1 { .. } => Box::new(Rank1Operator::new(spec, grid, scheme, dissipation)?),
        SystemKind::General { b } => {
            let e = eigenstructure_default(b).map_err(|e| SolverError::Unsupported(e.to_string()))?;
            Box::new(GeneralOperator::new(e, grid, scheme, dissipation))
        }
    })
}

fn domain_exit(detail: impl std::fmt::Display) -> SolverError {
    SolverError::DomainExit {
        time: f64::NAN,
        detail: detail.to_string(),
    }
}

pub struct Rank1Operator {
    grid: Grid,
    map: Rank1Map,
    spectral: Option<Spectral>,
    dissipation: f64,
    /// Scaled densities `ũ` of the last evaluated state.
    ut: Vec<Vec<f64>>,
    a_field: Vec<f64>,
}

impl Rank1Operator {
    pub fn new(spec: &SystemSpec, grid: Grid, scheme: DerivativeScheme, dissipation: f64) -> Result<Self, SolverError> {
        let map = Rank1Map::new(spec)?;
        let n = map.n();
        Ok(Self {
            grid,
            map,
            spectral: (scheme == DerivativeScheme::Spectral).then(|| Spectral::new(grid)),
            dissipation,
            ut: vec![vec![0.0; grid.points()]; n],
            a_field: vec![0.0; grid.points()],
        })
    }

    pub fn map(&self) -> &Rank1Map {
        &self.map
    }

    pub(crate) fn spectral(&self) -> Option<&Spectral> {
        self.spectral.as_ref()
    }

    pub(crate) fn dissipation(&self) -> f64 {
        self.dissipation
    }

    /// Fills `ũ` from `w`; returns `u` if requested.
    fn invert(&mut self, w: &[Vec<f64>]) -> Result<(), SolverError> {
        let n = self.map.n();
        let mut wp = vec![0.0; n];
        let mut up = vec![0.0; n];
        for p in 0..self.grid.points() {
            for i in 0..n {
                wp[i] = w[i][p];
            }
            self.map.psi(&wp, &mut up).map_err(domain_exit)?;
            for i in 0..n {
                self.ut[i][p] = self.map.a()[i] * up[i];
            }
        }
        Ok(())
    }

    /// Frozen coefficients `(Y, Y_n, a)` at every point of `w`.
    pub fn coefficients(&mut self, w: &[Vec<f64>]) -> Result<Rank1Frozen, SolverError> {
        self.invert(w)?;
        let n = self.map.n();
        let mut y = Vec::with_capacity(self.grid.points());
        let mut y_n = Vec::with_capacity(self.grid.points());
        let mut a = Vec::with_capacity(self.grid.points());
        let mut ut = vec![0.0; n];
        for p in 0..self.grid.points() {
            for i in 0..n {
                ut[i] = self.ut[i][p];
            }
            let t = transport_rank1(&ut, self.map.k(), false)?;
            y.push(t.y);
            y_n.push(t.y_n);
            a.push(t.a_hat);
        }
        Ok(Rank1Frozen { y, y_n, a })
    }
}

/// Pointwise rank-one coefficients frozen at one state.
#[derive(Debug, Clone)]
pub struct Rank1Frozen {
    pub y: Vec<DMatrix<f64>>,
    pub y_n: Vec<DVector<f64>>,
    pub a: Vec<f64>,
}

/// Linear rank-one operator: hyperbolic transport with `Y, Y_n` and velocity
/// `∇v_n` taken from a frozen state, parabolic diffusion with coefficient `a`.
///
/// Writes into `out` and returns the stability rates.
pub fn apply_rank1_linear(
    grid: &Grid,
    spectral: Option<&Spectral>,
    dissipation: f64,
    frozen: &Rank1Frozen,
    grad_vn: &[Vec<f64>],
    w: &[Vec<f64>],
    out: &mut [Vec<f64>],
) -> Rates {
    let n = w.len();
    let m = n - 1;
    let grads: Vec<Vec<Vec<f64>>> = w[..m].iter().map(|c| gradient(grid, spectral, c)).collect();
    let mut v_max: f64 = 0.0;
    let mut a_max: f64 = 0.0;
    for p in 0..grid.points() {
        let y = &frozen.y[p];
        let gsq: f64 = (0..grid.d).map(|nu| grad_vn[nu][p].powi(2)).sum();
        for i in 0..m {
            let mut acc = frozen.y_n[p][i] * gsq;
            for nu in 0..grid.d {
                let mut s = 0.0;
                for l in 0..m {
                    s += y[(i, l)] * grads[l][nu][p];
                }
                acc += grad_vn[nu][p] * s;
            }
            out[i][p] = acc;
        }
        if m > 0 {
            let row_max = (0..m)
                .map(|i| (0..m).map(|l| y[(i, l)].abs()).sum::<f64>())
                .fold(0.0, f64::max);
            let g = (0..grid.d).map(|nu| grad_vn[nu][p].abs()).fold(0.0, f64::max);
            v_max = v_max.max(row_max * g);
        }
        a_max = a_max.max(frozen.a[p]);
    }
    for i in 0..m {
        if spectral.is_none() {
            add_hyperdissipation(grid, dissipation, &w[i], &mut out[i]);
        }
    }
    out[m].iter_mut().for_each(|v| *v = 0.0);
    add_flux_divergence(grid, spectral, &frozen.a, &w[m], &mut out[m], 1.0);
    Rates { v_max, a_max }
}

impl Dynamics for Rank1Operator {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn n_comps(&self) -> usize {
        self.map.n()
    }

    fn rhs(&mut self, w: &[Vec<f64>], out: &mut [Vec<f64>]) -> Result<Rates, SolverError> {
        let frozen = self.coefficients(w)?;
        let n = self.map.n();
        let grad_wn = gradient(&self.grid, self.spectral.as_ref(), &w[n - 1]);
        Ok(apply_rank1_linear(
            &self.grid,
            self.spectral.as_ref(),
            self.dissipation,
            &frozen,
            &grad_wn,
            w,
            out,
        ))
    }

    fn densities(&mut self, w: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SolverError> {
        self.invert(w)?;
        Ok(self
            .ut
            .iter()
            .zip(self.map.a())
            .map(|(c, a)| c.iter().map(|v| v / a).collect())
            .collect())
    }

    fn parabolic_block(&self) -> Range<usize> {
        self.map.n() - 1..self.map.n()
    }

    fn parabolic_coefficients(&mut self, w: &[Vec<f64>]) -> Result<ParabolicCoeffs, SolverError> {
        self.invert(w)?;
        for p in 0..self.grid.points() {
            self.a_field[p] = (0..self.map.n()).map(|i| self.map.k()[i] * self.ut[i][p]).sum();
        }
        Ok(ParabolicCoeffs {
            lhs: vec![1.0],
            coeff: vec![vec![self.a_field.clone()]],
        })
    }
}

pub struct GeneralOperator {
    grid: Grid,
    e: EigenStructure,
    spectral: Option<Spectral>,
    dissipation: f64,
    opts: InversionOptions,
    /// Warm starts for the pointwise inversions.
    x_cache: Vec<Option<DVector<f64>>>,
    u: Vec<DVector<f64>>,
}

impl GeneralOperator {
    pub fn new(e: EigenStructure, grid: Grid, scheme: DerivativeScheme, dissipation: f64) -> Self {
        let points = grid.points();
        Self {
            grid,
            spectral: (scheme == DerivativeScheme::Spectral).then(|| Spectral::new(grid)),
            dissipation,
            opts: InversionOptions::default(),
            x_cache: vec![None; points],
            u: vec![DVector::zeros(e.n()); points],
            e,
        }
    }

    pub fn eigen(&self) -> &EigenStructure {
        &self.e
    }

    fn invert(&mut self, w: &[Vec<f64>]) -> Result<(), SolverError> {
        let nk = self.e.kernel_dim();
        let n = self.e.n();
        for p in 0..self.grid.points() {
            let pw = PointW::new(
                (0..nk).map(|i| w[i][p]).collect(),
                (nk..n).map(|i| w[i][p]).collect(),
                Variant::GeneralEigen,
            );
            let inv = psi_general_with(&pw, &self.e, self.x_cache[p].as_ref(), &self.opts)
                .or_else(|_| psi_general_with(&pw, &self.e, None, &self.opts))
                .map_err(domain_exit)?;
            self.u[p] = DVector::from_vec(inv.u.0);
            self.x_cache[p] = Some(inv.x);
        }
        Ok(())
    }
}

impl Dynamics for GeneralOperator {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn n_comps(&self) -> usize {
        self.e.n()
    }

    fn rhs(&mut self, w: &[Vec<f64>], out: &mut [Vec<f64>]) -> Result<Rates, SolverError> {
        self.invert(w)?;
        let (n, nk, r, d) = (self.e.n(), self.e.kernel_dim(), self.e.rank, self.grid.d);
        let sp = self.spectral.as_ref();
        let grads: Vec<Vec<Vec<f64>>> = w.iter().map(|c| gradient(&self.grid, sp, c)).collect();
        let lam = self.e.lambda_range().to_vec();
        let lmax = lam.iter().copied().fold(0.0, f64::max);
        let mut v_max: f64 = 0.0;
        let mut a_max: f64 = 0.0;
        for p in 0..self.grid.points() {
            let u = &self.u[p];
            a_max = a_max.max(lmax * u.max());
            if nk == 0 {
                continue;
            }
            let sigma = sigma_matrix(&self.e, u)?;
            let zetas: Vec<DVector<f64>> = (0..d)
                .map(|nu| DVector::from_iterator(r, (nk..n).map(|j| grads[j][nu][p])))
                .collect();
            let g0 = lower_order_at(u, &self.e, &zetas)?;
            let mut acc = g0;
            for (nu, zeta) in zetas.iter().enumerate() {
                let z = hyperbolic_velocity_general(u, &self.e, &sigma, zeta);
                let dwi = DVector::from_iterator(nk, (0..nk).map(|j| grads[j][nu][p]));
                acc += &z * dwi;
                let row_max = z.row_iter().map(|row| row.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
                v_max = v_max.max(row_max);
            }
            for i in 0..nk {
                out[i][p] = acc[i];
            }
        }
        if sp.is_none() {
            for i in 0..nk {
                add_hyperdissipation(&self.grid, self.dissipation, &w[i], &mut out[i]);
            }
        }
        let coeffs = self.parabolic_from_cache();
        for (k, row) in coeffs.coeff.iter().enumerate() {
            let target = &mut out[nk + k];
            target.iter_mut().for_each(|v| *v = 0.0);
            for (l, c) in row.iter().enumerate() {
                add_flux_divergence(&self.grid, sp, c, &w[nk + l], target, 1.0 / lam[k]);
            }
        }
        Ok(Rates { v_max, a_max })
    }

    fn densities(&mut self, w: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SolverError> {
        self.invert(w)?;
        Ok((0..self.e.n())
            .map(|i| self.u.iter().map(|u| u[i]).collect())
            .collect())
    }

    fn parabolic_block(&self) -> Range<usize> {
        self.e.kernel_dim()..self.e.n()
    }

    fn parabolic_coefficients(&mut self, w: &[Vec<f64>]) -> Result<ParabolicCoeffs, SolverError> {
        self.invert(w)?;
        Ok(self.parabolic_from_cache())
    }
}

impl GeneralOperator {
    /// `A1^II = Λ P D(u) Pᵀ Λ` at the cached densities.
    fn parabolic_from_cache(&self) -> ParabolicCoeffs {
        let r = self.e.rank;
        let lam = self.e.lambda_range();
        let points = self.grid.points();
        let mut coeff = vec![vec![vec![0.0; points]; r]; r];
        for p in 0..points {
            let u = &self.u[p];
            for k in 0..r {
                for l in 0..r {
                    let s: f64 = (0..self.e.n()).map(|i| self.e.p[(k, i)] * u[i] * self.e.p[(l, i)]).sum();
                    coeff[k][l][p] = lam[k] * lam[l] * s;
                }
            }
        }
        ParabolicCoeffs {
            lhs: lam.to_vec(),
            coeff,
        }
    }
}
