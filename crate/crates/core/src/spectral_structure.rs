//! Orthonormal eigenstructure of a symmetric positive semidefinite `B`.
//!
//! Rows of `basis` are eigenvectors `ξ^1, …, ξ^n`, ordered by ascending eigenvalue.
//! The first `n - r` rows span the kernel (block `Q`), the last `r` rows span
//! the range (block `P`). Signs are fixed so that the largest-magnitude entry of
//! each eigenvector is positive; ties in the eigenvalue are broken by comparing
//! eigenvectors entrywise.
//!
//! Inside a repeated eigenvalue any orthonormal basis is as good as another: every
//! quantity assembled downstream depends on the spans only through the projectors
//! `QᵀQ` and `PᵀP`.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::model::RANK_TOL;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("symmetric eigensolver did not converge")]
    EigenFailure,
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenStructure {
    /// Eigenvalues, ascending; the first `n - rank` are exactly zero.
    pub lambda: Vec<f64>,
    /// Orthogonal matrix whose rows are the eigenvectors.
    pub basis: DMatrix<f64>,
    /// Kernel rows, `(n - r) × n`.
    pub q: DMatrix<f64>,
    /// Range rows, `r × n`.
    pub p: DMatrix<f64>,
    pub rank: usize,
}

impl EigenStructure {
    pub fn n(&self) -> usize {
        self.basis.ncols()
    }

    pub fn kernel_dim(&self) -> usize {
        self.n() - self.rank
    }

    /// Positive eigenvalues `λ_II`.
    pub fn lambda_range(&self) -> &[f64] {
        &self.lambda[self.kernel_dim()..]
    }

    /// Eigenvector `ξ^k` (0-based).
    pub fn xi(&self, k: usize) -> DVector<f64> {
        self.basis.row(k).transpose()
    }

    pub fn kernel_projector(&self) -> DMatrix<f64> {
        self.q.transpose() * &self.q
    }

    pub fn range_projector(&self) -> DMatrix<f64> {
        self.p.transpose() * &self.p
    }
}

pub(crate) fn sorted_symmetric_eigenvalues(b: &DMatrix<f64>) -> Option<Vec<f64>> {
    let eig = SymmetricEigen::try_new(b.clone(), EIGEN_EPS, EIGEN_MAX_ITER)?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Some(values)
}

fn fix_sign(v: &mut [f64]) {
    // near-ties in magnitude resolve to the first such entry
    let vmax = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let best = v
        .iter()
        .position(|x| x.abs() >= vmax * (1.0 - 1e-12))
        .unwrap_or(0);
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

/// Eigendecomposition with eigenvalues below `tol · λ_max` snapped to zero.
pub fn eigenstructure(b: &DMatrix<f64>, tol: f64) -> Result<EigenStructure, SpectralError> {
    let n = b.nrows();
    if b.ncols() != n {
        return Err(SpectralError::NotSquare(b.nrows(), b.ncols()));
    }
    let sym = (b + b.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or(SpectralError::EigenFailure)?;

    let lmax = eig.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|j| {
            let mut v: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
            fix_sign(&mut v);
            let l = eig.eigenvalues[j];
            let l = if l <= tol * lmax { 0.0 } else { l };
            (l, v)
        })
        .collect();
    pairs.sort_by(|(la, va), (lb, vb)| la.total_cmp(lb).then_with(|| lexicographic(va, vb)));

    let rank = pairs.iter().filter(|(l, _)| *l > 0.0).count();
    let basis = DMatrix::from_fn(n, n, |i, j| pairs[i].1[j]);
    let lambda = pairs.iter().map(|(l, _)| *l).collect();
    let q = basis.rows(0, n - rank).into_owned();
    let p = basis.rows(n - rank, rank).into_owned();
    Ok(EigenStructure {
        lambda,
        basis,
        q,
        p,
        rank,
    })
}

/// Eigenstructure with the default rank threshold.
pub fn eigenstructure_default(b: &DMatrix<f64>) -> Result<EigenStructure, SpectralError> {
    eigenstructure(b, RANK_TOL)
}

/// Maximum deviations of the five block identities
/// `QQᵀ = I`, `PPᵀ = I`, `QᵀQ + PᵀP = I`, `PQᵀ = 0`, `QPᵀ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockIdentityReport {
    pub qqt: f64,
    pub ppt: f64,
    pub completeness: f64,
    pub pqt: f64,
    pub qpt: f64,
}

impl BlockIdentityReport {
    pub fn max(&self) -> f64 {
        self.qqt
            .max(self.ppt)
            .max(self.completeness)
            .max(self.pqt)
            .max(self.qpt)
    }
}

fn max_dev_from_identity(m: &DMatrix<f64>) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((m[(i, j)] - target).abs());
        }
    }
    dev
}

pub fn verify_block_identities(e: &EigenStructure) -> BlockIdentityReport {
    let q = &e.q;
    let p = &e.p;
    BlockIdentityReport {
        qqt: max_dev_from_identity(&(q * q.transpose())),
        ppt: max_dev_from_identity(&(p * p.transpose())),
        completeness: max_dev_from_identity(&(q.transpose() * q + p.transpose() * p)),
        pqt: (p * q.transpose()).amax(),
        qpt: (q * p.transpose()).amax(),
    }
}

/// Residuals of `B Qᵀ = 0`, `B Pᵀ = Pᵀ diag(λ_II)` and `B = Oᵀ diag(λ) O`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenResiduals {
    pub kernel: f64,
    pub range: f64,
    pub reconstruction: f64,
}

pub fn eigen_residuals(e: &EigenStructure, b: &DMatrix<f64>) -> EigenResiduals {
    let lam_ii = DMatrix::from_diagonal(&DVector::from_column_slice(e.lambda_range()));
    let lam = DMatrix::from_diagonal(&DVector::from_column_slice(&e.lambda));
    EigenResiduals {
        kernel: (b * e.q.transpose()).amax(),
        range: (b * e.p.transpose() - e.p.transpose() * lam_ii).amax(),
        reconstruction: (b - e.basis.transpose() * lam * &e.basis).amax(),
    }
}
