//! Explicit transform for rank-one systems.
//!
//! With `ũ_i = a_i u_i`:
//!
//! ```text
//! w_i = (1/k_i) log ũ_i - (1/k_n) log ũ_n,   i < n
//! w_n = Σ_j ũ_j = p(u)
//! ```
//!
//! The inverse reduces to the scalar equation
//! `g(s) = s + Σ_{j<n} exp(k_j w_j) s^{k_j/k_n} = w_n` for `s = ũ_n`, which is
//! strictly increasing from 0 to ∞ and solved in `t = log s`.

use nalgebra::DMatrix;

use super::{check_positive, solve_exp_sum, PointU, PointW, TransformError, Variant};
use crate::model::{SystemKind, SystemSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Rank1Map {
    k: Vec<f64>,
    a: Vec<f64>,
}

impl Rank1Map {
    pub fn new(spec: &SystemSpec) -> Result<Self, TransformError> {
        match &spec.kind {
            SystemKind::Rank1 { k, a } => Ok(Self {
                k: k.clone(),
                a: a.clone(),
            }),
            SystemKind::General { .. } => Err(TransformError::WrongSystem { expected: "rank-one" }),
        }
    }

    pub fn n(&self) -> usize {
        self.k.len()
    }

    pub fn k(&self) -> &[f64] {
        &self.k
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn phi(&self, u: &[f64], w: &mut [f64]) -> Result<(), TransformError> {
        check_positive(u)?;
        let n = self.n();
        let kn = self.k[n - 1];
        let log_un = (self.a[n - 1] * u[n - 1]).ln() / kn;
        for i in 0..n - 1 {
            w[i] = (self.a[i] * u[i]).ln() / self.k[i] - log_un;
        }
        w[n - 1] = self.a.iter().zip(u).map(|(a, u)| a * u).sum();
        Ok(())
    }

    /// Inverse transform; writes `u` and returns `ũ_n`.
    pub fn psi(&self, w: &[f64], u: &mut [f64]) -> Result<f64, TransformError> {
        let n = self.n();
        let wn = w[n - 1];
        if !(wn > 0.0) || !wn.is_finite() {
            return Err(TransformError::NonPositiveParabolic(wn));
        }
        let kn = self.k[n - 1];
        let mut terms = Vec::with_capacity(n);
        terms.push((1.0, 1.0));
        for j in 0..n - 1 {
            terms.push(((self.k[j] * w[j]).exp(), self.k[j] / kn));
        }
        let t = solve_exp_sum(&terms, wn, (0.5 * wn).ln())?;
        let s = t.exp();
        for j in 0..n - 1 {
            u[j] = (self.k[j] * w[j] + self.k[j] / kn * t).exp() / self.a[j];
        }
        u[n - 1] = s / self.a[n - 1];
        check_positive(u)?;
        Ok(s)
    }

    /// `g(ũ_n) - w_n`, the residual of the scalar inversion equation.
    pub fn inversion_residual(&self, w: &[f64], u: &[f64]) -> f64 {
        let n = self.n();
        let s = self.a[n - 1] * u[n - 1];
        let kn = self.k[n - 1];
        let g: f64 = s + (0..n - 1)
            .map(|j| (self.k[j] * w[j]).exp() * s.powf(self.k[j] / kn))
            .sum::<f64>();
        g - w[n - 1]
    }
}

pub fn phi_rank1(u: &PointU, spec: &SystemSpec) -> Result<PointW, TransformError> {
    let map = Rank1Map::new(spec)?;
    let mut w = vec![0.0; map.n()];
    map.phi(u.as_slice(), &mut w)?;
    Ok(PointW::from_slice(&w, map.n() - 1, Variant::Rank1Explicit))
}

pub fn psi_rank1(w: &PointW, spec: &SystemSpec) -> Result<PointU, TransformError> {
    let map = Rank1Map::new(spec)?;
    let flat = w.to_vec();
    if flat.len() != map.n() {
        return Err(TransformError::DimensionMismatch {
            expected: map.n(),
            got: flat.len(),
        });
    }
    let mut u = vec![0.0; map.n()];
    map.psi(&flat, &mut u)?;
    Ok(PointU(u))
}

#[derive(Debug, Clone)]
pub struct Rank1Jacobian {
    pub matrix: DMatrix<f64>,
    /// Determinant of `matrix` computed by LU factorisation.
    pub det_numeric: f64,
    /// Closed-form determinant.
    pub det_formula: f64,
}

/// Closed form `det DΦ(u) = (Π a_i) Σ_ℓ Π_{i≠ℓ} 1/(k_i ũ_i)`.
pub fn det_formula_rank1(u: &[f64], k: &[f64], a: &[f64]) -> f64 {
    let n = u.len();
    let inv: Vec<f64> = (0..n).map(|i| 1.0 / (k[i] * a[i] * u[i])).collect();
    let sum: f64 = (0..n)
        .map(|l| {
            (0..n)
                .filter(|&i| i != l)
                .map(|i| inv[i])
                .product::<f64>()
        })
        .sum();
    a.iter().product::<f64>() * sum
}

pub fn jacobian_rank1(u: &PointU, spec: &SystemSpec) -> Result<Rank1Jacobian, TransformError> {
    let map = Rank1Map::new(spec)?;
    let u = u.as_slice();
    check_positive(u)?;
    let n = map.n();
    let (k, a) = (map.k(), map.a());
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        m[(i, i)] = 1.0 / (k[i] * u[i]);
        m[(i, n - 1)] = -1.0 / (k[n - 1] * u[n - 1]);
    }
    for j in 0..n {
        m[(n - 1, j)] = a[j];
    }
    let det_numeric = m.clone().lu().determinant();
    Ok(Rank1Jacobian {
        matrix: m,
        det_numeric,
        det_formula: det_formula_rank1(u, k, a),
    })
}
