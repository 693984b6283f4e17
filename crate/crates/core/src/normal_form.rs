//! Pointwise coefficients of the symmetric hyperbolic–parabolic normal forms.
//!
//! Rank-one systems (variables from [`crate::transforms::rank1`]):
//!
//! ```text
//! A0 ∂t w' = Σ_ν ∂_ν w_n A1 ∂_ν w' + V_n |∇w_n|²,    ∂t w_n = div(a ∇w_n)
//! ```
//!
//! with `A0 = diag(k_i ũ_i / (k_n - k_i))`, `A1 = A0 Y`, `V_n = A0 Y_n`, `a = Σ k_i ũ_i`.
//!
//! General systems (variables from [`crate::transforms::general`]):
//!
//! ```text
//! A0^I ∂t w_I = Σ_ν A1^I(∂_ν w_II) ∂_ν w_I + f^I,    D^II ∂t w_II = div(A1^II ∇w_II)
//! ```

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::model::{SystemKind, SystemSpec};
use crate::spectral_structure::EigenStructure;
use crate::transforms::general::kernel_schur_inverse;
use crate::transforms::{psi_general, psi_rank1, sensitivity_at, PointW, TransformError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormalFormError {
    #[error("k[{index}] equals k_n; aggregate equal mobilities first")]
    DegenerateSpectrumGap { index: usize },
    #[error("symmetriser block is numerically singular")]
    SingularA0,
    #[error("normal form requires a {expected} system")]
    WrongSystem { expected: &'static str },
    #[error(transparent)]
    Transform(#[from] TransformError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalFormCoeffs {
    /// Symmetriser, `(n-r) × (n-r)`.
    pub a0: DMatrix<f64>,
    /// First-order coefficient per spatial direction; already contains the gradient argument.
    pub a1: Vec<DMatrix<f64>>,
    /// Lower-order hyperbolic term.
    pub lower_order: DVector<f64>,
    /// Constant matrix in front of `∂t w_II`.
    pub parab_lhs: DMatrix<f64>,
    /// Parabolic diffusion matrix, `r × r`.
    pub parab_coeff: DMatrix<f64>,
}

/// Rank-one transport coefficients at one state, independent of gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Rank1Transport {
    /// `Y`, `(n-1) × (n-1)`.
    pub y: DMatrix<f64>,
    /// `Y_n`.
    pub y_n: DVector<f64>,
    /// Diagonal of `A0`.
    pub a0_diag: DVector<f64>,
    /// `â = Σ k_i ũ_i`.
    pub a_hat: f64,
}

/// Transport coefficients at scaled densities `ũ = a ⊙ u`.
///
/// With `check_gap = false` the symmetriser diagonal is left at zero for
/// species whose `k` equals `k_n`; `Y` and `Y_n` are still valid.
pub fn transport_rank1(ut: &[f64], k: &[f64], check_gap: bool) -> Result<Rank1Transport, NormalFormError> {
    let n = k.len();
    let kn = k[n - 1];
    let a_hat: f64 = k.iter().zip(ut).map(|(ki, ui)| ki * ui).sum();
    let m = n - 1;
    let mut y = DMatrix::zeros(m, m);
    let mut y_n = DVector::zeros(m);
    let mut a0_diag = DVector::zeros(m);
    for i in 0..m {
        for l in 0..m {
            let diag = if i == l { k[i] } else { 0.0 };
            y[(i, l)] = diag + (kn - k[i]) * k[l] * ut[l] / a_hat;
        }
        y_n[i] = (k[i] - kn) / a_hat;
        if k[i] < kn {
            a0_diag[i] = k[i] * ut[i] / (kn - k[i]);
        } else if check_gap {
            return Err(NormalFormError::DegenerateSpectrumGap { index: i });
        }
    }
    Ok(Rank1Transport {
        y,
        y_n,
        a0_diag,
        a_hat,
    })
}

/// Rank-one coefficients at `w`; `grad_wn[ν]` is `∂_ν w_n`.
pub fn coeffs_rank1(w: &PointW, spec: &SystemSpec, grad_wn: &[f64]) -> Result<NormalFormCoeffs, NormalFormError> {
    let (k, a) = match &spec.kind {
        SystemKind::Rank1 { k, a } => (k, a),
        SystemKind::General { .. } => return Err(NormalFormError::WrongSystem { expected: "rank-one" }),
    };
    let u = psi_rank1(w, spec)?;
    let ut: Vec<f64> = u.0.iter().zip(a).map(|(ui, ai)| ai * ui).collect();
    coeffs_rank1_at(&ut, k, grad_wn)
}

/// Rank-one coefficients at scaled densities `ũ`.
pub fn coeffs_rank1_at(ut: &[f64], k: &[f64], grad_wn: &[f64]) -> Result<NormalFormCoeffs, NormalFormError> {
    let t = transport_rank1(ut, k, true)?;
    let a0 = DMatrix::from_diagonal(&t.a0_diag);
    let a1_base = &a0 * &t.y;
    let grad_sq: f64 = grad_wn.iter().map(|g| g * g).sum();
    Ok(NormalFormCoeffs {
        a1: grad_wn.iter().map(|g| &a1_base * *g).collect(),
        lower_order: (&a0 * &t.y_n) * grad_sq,
        a0,
        parab_lhs: DMatrix::identity(1, 1),
        parab_coeff: DMatrix::from_element(1, 1, t.a_hat),
    })
}

/// `Σ(u) = Qᵀ (Q D(u)^{-1} Qᵀ)^{-1} Q`.
pub fn sigma_matrix(e: &EigenStructure, u: &DVector<f64>) -> Result<DMatrix<f64>, NormalFormError> {
    let a0 = kernel_schur_inverse(e, u).map_err(|_| NormalFormError::SingularA0)?;
    Ok(e.q.transpose() * a0 * &e.q)
}

/// General coefficients at `w`; `grad_wii[ν]` is `∂_ν w_II`.
pub fn coeffs_general(w: &PointW, e: &EigenStructure, grad_wii: &[DVector<f64>]) -> Result<NormalFormCoeffs, NormalFormError> {
    let u = psi_general(w, e)?;
    coeffs_general_at(&DVector::from_column_slice(u.as_slice()), e, grad_wii)
}

/// General coefficients at a known positive state `u`.
pub fn coeffs_general_at(
    u: &DVector<f64>,
    e: &EigenStructure,
    grad_wii: &[DVector<f64>],
) -> Result<NormalFormCoeffs, NormalFormError> {
    let a0 = kernel_schur_inverse(e, u).map_err(|_| NormalFormError::SingularA0)?;
    let sigma = e.q.transpose() * &a0 * &e.q;
    let lam = DMatrix::from_diagonal(&DVector::from_column_slice(e.lambda_range()));
    let pt_lam = e.p.transpose() * &lam;
    let a1 = grad_wii
        .iter()
        .map(|g| {
            let dmu = &pt_lam * g;
            let diag = DMatrix::from_diagonal(&dmu.component_div(u));
            &e.q * &sigma * diag * &sigma * e.q.transpose()
        })
        .collect();
    let g0 = lower_order_at(u, e, grad_wii)?;
    let parab_coeff = &lam * &e.p * DMatrix::from_diagonal(u) * e.p.transpose() * &lam;
    Ok(NormalFormCoeffs {
        lower_order: &a0 * g0,
        a0,
        a1,
        parab_lhs: lam,
        parab_coeff,
    })
}

/// The quadratic term `g°(w, ∇w_II)` (before multiplication by `A0^I`).
pub fn lower_order_general(w: &PointW, e: &EigenStructure, grad_wii: &[DVector<f64>]) -> Result<DVector<f64>, NormalFormError> {
    let u = psi_general(w, e)?;
    lower_order_at(&DVector::from_column_slice(u.as_slice()), e, grad_wii)
}

pub fn lower_order_at(u: &DVector<f64>, e: &EigenStructure, grad_wii: &[DVector<f64>]) -> Result<DVector<f64>, NormalFormError> {
    let nk = e.kernel_dim();
    if nk == 0 {
        return Ok(DVector::zeros(0));
    }
    let s = sensitivity_at(u, e)?;
    let lam = DMatrix::from_diagonal(&DVector::from_column_slice(e.lambda_range()));
    let pt = e.p.transpose();
    let mut acc = DVector::zeros(e.n());
    for g in grad_wii {
        // Σ_m ∂_{w_m} log u ∂_ν w_m over m ∈ II, and ∂_ν μ
        let dlogu = &pt * (&s.dxf_inv * g);
        let dmu = &pt * (&lam * g);
        acc += dlogu.component_mul(&dmu);
    }
    Ok(&e.q * acc)
}

/// `A0^{-1} A1^I(ζ)` in the closed form `Q D(Pᵀλζ / u) Σ Qᵀ`.
pub fn hyperbolic_velocity_general(u: &DVector<f64>, e: &EigenStructure, sigma: &DMatrix<f64>, zeta: &DVector<f64>) -> DMatrix<f64> {
    let lam = DVector::from_column_slice(e.lambda_range());
    let dmu = e.p.transpose() * lam.component_mul(zeta);
    let diag = DMatrix::from_diagonal(&dmu.component_div(u));
    &e.q * diag * sigma * e.q.transpose()
}

/// Symmetriser of a rank-one `B = c ⊗ c` from the explicit formula
/// `Q (D(u) - D(u)c ⊗ D(u)c / Σ c_i² u_i) Qᵀ`.
pub fn a0_outer_product_form(u: &DVector<f64>, c: &DVector<f64>, e: &EigenStructure) -> DMatrix<f64> {
    let duc = u.component_mul(c);
    let denom: f64 = c.iter().zip(u.iter()).map(|(ci, ui)| ci * ci * ui).sum();
    let inner = DMatrix::from_diagonal(u) - &duc * duc.transpose() / denom;
    &e.q * inner * e.q.transpose()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertifyReport {
    pub a0_asymmetry: f64,
    pub a1_asymmetry: f64,
    pub parab_asymmetry: f64,
    pub a0_min_eigenvalue: f64,
    pub parab_min_eigenvalue: f64,
}

impl CertifyReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.a0_asymmetry <= tol
            && self.a1_asymmetry <= tol
            && self.parab_asymmetry <= tol
            && self.a0_min_eigenvalue > 0.0
            && self.parab_min_eigenvalue > 0.0
    }
}

/// `max|M - Mᵀ| / max|M|` (zero for the empty or zero matrix).
pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).amax() / scale
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

pub fn certify(c: &NormalFormCoeffs) -> CertifyReport {
    CertifyReport {
        a0_asymmetry: relative_asymmetry(&c.a0),
        a1_asymmetry: c.a1.iter().map(relative_asymmetry).fold(0.0, f64::max),
        parab_asymmetry: relative_asymmetry(&c.parab_coeff),
        a0_min_eigenvalue: min_eigenvalue(&c.a0),
        parab_min_eigenvalue: min_eigenvalue(&c.parab_coeff),
    }
}
