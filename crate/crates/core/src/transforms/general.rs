//! Eigenbasis transform for symmetric positive semidefinite `B` of rank `r`.
//!
//! Forward: `w_I = Q log u`, `w_II = P u`. The inverse writes
//! `log u = Qᵀ w_I + Pᵀ X` and finds `X ∈ R^r` as the unique minimiser of the
//! strictly convex function
//!
//! ```text
//! G(X; w) = Σ_i exp(Qᵀ w_I + Pᵀ X)_i - w_II · X
//! ```
//!
//! whose gradient is `F(X; w) = P u(X) - w_II` and Hessian `P D(u) Pᵀ`.
//! `G` is coercive exactly when `w_II ∈ P R_+^n`; otherwise the damped Newton
//! iteration runs off to infinity and the inversion reports
//! [`TransformError::MinimizerDiverged`].

use nalgebra::{DMatrix, DVector};

use super::{check_positive, PointU, PointW, TransformError, Variant};
use crate::spectral_structure::EigenStructure;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionOptions {
    /// Stop when `‖F‖ ≤ grad_tol (1 + ‖w_II‖)`.
    pub grad_tol: f64,
    /// Declare divergence when `‖X‖ > divergence_factor (1 + ‖w‖)`.
    pub divergence_factor: f64,
    pub max_iter: usize,
    /// Floor for the componentwise start proxy `Pᵀ w_II`.
    pub proxy_floor: f64,
}

impl Default for InversionOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-12,
            divergence_factor: 1e3,
            max_iter: 200,
            proxy_floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneralInversion {
    pub u: PointU,
    pub x: DVector<f64>,
    pub iterations: usize,
    pub gradient_residual: f64,
}

pub fn phi_general(u: &PointU, e: &EigenStructure) -> Result<PointW, TransformError> {
    let u = u.as_slice();
    if u.len() != e.n() {
        return Err(TransformError::DimensionMismatch {
            expected: e.n(),
            got: u.len(),
        });
    }
    check_positive(u)?;
    let log_u = DVector::from_iterator(u.len(), u.iter().map(|x| x.ln()));
    let uv = DVector::from_column_slice(u);
    let w_i = &e.q * log_u;
    let w_ii = &e.p * uv;
    Ok(PointW::new(
        w_i.iter().copied().collect(),
        w_ii.iter().copied().collect(),
        Variant::GeneralEigen,
    ))
}

pub fn psi_general(w: &PointW, e: &EigenStructure) -> Result<PointU, TransformError> {
    psi_general_with(w, e, None, &InversionOptions::default()).map(|inv| inv.u)
}

fn objective(base: &DVector<f64>, pt: &DMatrix<f64>, w_ii: &DVector<f64>, x: &DVector<f64>) -> (f64, DVector<f64>) {
    let arg = base + pt * x;
    let u = arg.map(f64::exp);
    (u.sum() - w_ii.dot(x), u)
}

/// Inverse transform with explicit options and an optional Newton start `x0`.
pub fn psi_general_with(
    w: &PointW,
    e: &EigenStructure,
    x0: Option<&DVector<f64>>,
    opts: &InversionOptions,
) -> Result<GeneralInversion, TransformError> {
    let (nk, r) = (e.kernel_dim(), e.rank);
    if w.w_i.len() != nk || w.w_ii.len() != r {
        return Err(TransformError::DimensionMismatch {
            expected: e.n(),
            got: w.w_i.len() + w.w_ii.len(),
        });
    }
    let w_i = DVector::from_column_slice(&w.w_i);
    let w_ii = DVector::from_column_slice(&w.w_ii);
    let pt = e.p.transpose();
    let base = e.q.transpose() * &w_i;
    let w_norm = (w_i.norm_squared() + w_ii.norm_squared()).sqrt();
    let tol = opts.grad_tol * (1.0 + w_ii.norm());
    let limit = opts.divergence_factor * (1.0 + w_norm);

    let mut x = match x0 {
        Some(x0) => x0.clone(),
        None => {
            let proxy = (&pt * &w_ii).map(|v| v.max(opts.proxy_floor).ln());
            &e.p * proxy
        }
    };
    let (mut g, mut u) = objective(&base, &pt, &w_ii, &x);
    let mut stalled = false;

    for iter in 0..opts.max_iter {
        let grad = &e.p * &u - &w_ii;
        let res = grad.norm();
        if res <= tol || (stalled && res <= 1e3 * tol) {
            // one more full step polishes the last digits
            let hess = &e.p * DMatrix::from_diagonal(&u) * &pt;
            if let Some(ch) = hess.cholesky() {
                let trial = &x - ch.solve(&grad);
                let (_, u_trial) = objective(&base, &pt, &w_ii, &trial);
                if (&e.p * &u_trial - &w_ii).norm() < res {
                    x = trial;
                    u = u_trial;
                }
            }
            let u_vec: Vec<f64> = u.iter().copied().collect();
            check_positive(&u_vec)?;
            return Ok(GeneralInversion {
                u: PointU(u_vec),
                x,
                iterations: iter,
                gradient_residual: (&e.p * &u - &w_ii).norm(),
            });
        }
        if stalled {
            return Err(TransformError::MinimizerStalled { residual: res });
        }
        let hess = &e.p * DMatrix::from_diagonal(&u) * &pt;
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&(-&grad)),
            None => -&grad,
        };
        let slope = grad.dot(&step);
        // below this predicted decrease G is flat at working precision, so the
        // full Newton step is judged by the gradient norm instead
        let flat = -slope <= 1e-8 * (1.0 + g.abs());
        let mut accepted = false;
        if flat {
            let trial = &x + &step;
            let (g_trial, u_trial) = objective(&base, &pt, &w_ii, &trial);
            if g_trial.is_finite() && (&e.p * &u_trial - &w_ii).norm() < res {
                x = trial;
                g = g_trial;
                u = u_trial;
                accepted = true;
            }
        } else {
            // Newton direction first; steepest descent when the Hessian is too
            // badly scaled for the Newton direction to make progress
            let descent = -&grad / hess.norm().max(f64::MIN_POSITIVE);
            for dir in [step, descent] {
                let slope = grad.dot(&dir);
                let mut alpha = 1.0;
                while alpha > 1e-12 && !accepted {
                    let trial = &x + &dir * alpha;
                    let (g_trial, u_trial) = objective(&base, &pt, &w_ii, &trial);
                    if g_trial.is_finite() && g_trial <= g + 1e-4 * alpha * slope {
                        x = trial;
                        g = g_trial;
                        u = u_trial;
                        accepted = true;
                    }
                    alpha *= 0.5;
                }
                if accepted {
                    break;
                }
            }
        }
        if !accepted {
            stalled = true;
            continue;
        }
        let xn = x.norm();
        if xn > limit || !g.is_finite() {
            return Err(TransformError::MinimizerDiverged { norm: xn });
        }
    }
    let grad = &e.p * &u - &w_ii;
    let xn = x.norm();
    if xn > 0.1 * limit {
        return Err(TransformError::MinimizerDiverged { norm: xn });
    }
    Err(TransformError::MinimizerStalled {
        residual: grad.norm(),
    })
}

/// Implicit-function sensitivities of the inverse transform at `u = Ψ(w)`.
#[derive(Debug, Clone)]
pub struct Sensitivity {
    pub u: DVector<f64>,
    /// `∂_X F = P D(u) Pᵀ`.
    pub dxf: DMatrix<f64>,
    /// `(∂_X F)^{-1}` assembled from the kernel/range block formula.
    pub dxf_inv: DMatrix<f64>,
    /// Column `m` is `∂_{w_m} X` for `m` in the kernel block (`r × (n-r)`).
    pub dx_dw_kernel: DMatrix<f64>,
    /// Column `m` is `∂_{w_m} X` for `m` in the range block (`r × r`).
    pub dx_dw_range: DMatrix<f64>,
    /// Column `m` is `∂_{w_m} log u` over all `n` variables (`n × n`).
    pub dlogu_dw: DMatrix<f64>,
}

/// `(Q D(u)^{-1} Qᵀ)^{-1}`, the kernel-block symmetriser.
pub(crate) fn kernel_schur_inverse(e: &EigenStructure, u: &DVector<f64>) -> Result<DMatrix<f64>, TransformError> {
    let nk = e.kernel_dim();
    if nk == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let dinv = DMatrix::from_diagonal(&u.map(|x| 1.0 / x));
    let m = &e.q * dinv * e.q.transpose();
    let ch = m.cholesky().ok_or(TransformError::SingularBlock)?;
    Ok(ch.inverse())
}

pub fn dpsi_general(w: &PointW, e: &EigenStructure) -> Result<Sensitivity, TransformError> {
    let u = psi_general(w, e)?;
    sensitivity_at(&DVector::from_column_slice(u.as_slice()), e)
}

/// Sensitivities at a known positive state `u`.
pub fn sensitivity_at(u: &DVector<f64>, e: &EigenStructure) -> Result<Sensitivity, TransformError> {
    let (n, nk, r) = (e.n(), e.kernel_dim(), e.rank);
    let du = DMatrix::from_diagonal(u);
    let dinv = DMatrix::from_diagonal(&u.map(|x| 1.0 / x));
    let pt = e.p.transpose();
    let dxf = &e.p * &du * &pt;

    let a0 = kernel_schur_inverse(e, u)?;
    let mut dxf_inv = &e.p * &dinv * &pt;
    if nk > 0 {
        dxf_inv -= &e.p * &dinv * e.q.transpose() * &a0 * &e.q * &dinv * &pt;
    }

    let pdu = &e.p * &du;
    let mut dx_dw_kernel = DMatrix::zeros(r, nk);
    for m in 0..nk {
        let col = -(&dxf_inv * (&pdu * e.xi(m)));
        dx_dw_kernel.set_column(m, &col);
    }
    let dx_dw_range = dxf_inv.clone();

    let mut dlogu_dw = DMatrix::zeros(n, n);
    for m in 0..nk {
        let col = e.xi(m) + &pt * dx_dw_kernel.column(m);
        dlogu_dw.set_column(m, &col);
    }
    for m in 0..r {
        // w_II enters log u only through X
        let col = &pt * dx_dw_range.column(m);
        dlogu_dw.set_column(nk + m, &col);
    }
    if !dxf_inv.iter().all(|v| v.is_finite()) {
        return Err(TransformError::SingularBlock);
    }
    Ok(Sensitivity {
        u: u.clone(),
        dxf,
        dxf_inv,
        dx_dw_kernel,
        dx_dw_range,
        dlogu_dw,
    })
}

/// `DΦ(u)` with rows `Q D(u)^{-1}` stacked over `P`.
pub fn jacobian_general(u: &PointU, e: &EigenStructure) -> Result<DMatrix<f64>, TransformError> {
    let u = u.as_slice();
    check_positive(u)?;
    let n = e.n();
    let nk = e.kernel_dim();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..nk {
        for j in 0..n {
            m[(i, j)] = e.q[(i, j)] / u[j];
        }
    }
    for i in 0..e.rank {
        for j in 0..n {
            m[(nk + i, j)] = e.p[(i, j)];
        }
    }
    Ok(m)
}
