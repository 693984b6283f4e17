//! Alternative transform for rank-one systems with `a = k`.
//!
//! ```text
//! w_i = u_i^{1/k_i} / L(u),   L(u) = Σ_j u_j^{1/k_j},   i < n
//! w_n = Σ_j k_j u_j
//! ```
//!
//! `w_I` lies in the open simplex `E = {w_i > 0, Σ w_i < 1}`. Writing
//! `s = 1 - Σ_{i<n} w_i` gives `u_j = (L w_j)^{k_j}` and `u_n = (L s)^{k_n}`, so
//! the inverse is a scalar monotone equation in `log L`.

use nalgebra::DMatrix;

use super::{check_positive, solve_exp_sum, PointU, PointW, TransformError, Variant};
use crate::model::{SystemKind, SystemSpec};

fn alt_k(spec: &SystemSpec) -> Result<&[f64], TransformError> {
    match &spec.kind {
        SystemKind::Rank1 { k, a }
            if k.iter().zip(a).all(|(ki, ai)| (ki - ai).abs() <= 1e-14 * ki.abs()) =>
        {
            Ok(k)
        }
        _ => Err(TransformError::WrongSystem {
            expected: "rank-one with a = k",
        }),
    }
}

pub fn phi_alt(u: &PointU, spec: &SystemSpec) -> Result<PointW, TransformError> {
    let k = alt_k(spec)?;
    let u = u.as_slice();
    check_positive(u)?;
    let n = k.len();
    let roots: Vec<f64> = u.iter().zip(k).map(|(ui, ki)| ui.powf(1.0 / ki)).collect();
    let l: f64 = roots.iter().sum();
    let w_i = roots[..n - 1].iter().map(|r| r / l).collect();
    let w_n = u.iter().zip(k).map(|(ui, ki)| ki * ui).sum();
    Ok(PointW::new(w_i, vec![w_n], Variant::AppendixAlt))
}

pub fn psi_alt(w: &PointW, spec: &SystemSpec) -> Result<PointU, TransformError> {
    let k = alt_k(spec)?;
    let n = k.len();
    if w.w_i.len() != n - 1 || w.w_ii.len() != 1 {
        return Err(TransformError::DimensionMismatch {
            expected: n,
            got: w.w_i.len() + w.w_ii.len(),
        });
    }
    let s = 1.0 - w.w_i.iter().sum::<f64>();
    if !(s > 0.0) || w.w_i.iter().any(|x| !(*x > 0.0)) {
        return Err(TransformError::SimplexViolation(w.w_i.clone()));
    }
    let wn = w.w_ii[0];
    if !(wn > 0.0) || !wn.is_finite() {
        return Err(TransformError::NonPositiveParabolic(wn));
    }
    let mut terms: Vec<(f64, f64)> = w
        .w_i
        .iter()
        .zip(k)
        .map(|(wj, kj)| (kj * wj.powf(*kj), *kj))
        .collect();
    terms.push((k[n - 1] * s.powf(k[n - 1]), k[n - 1]));
    let log_l = solve_exp_sum(&terms, wn, 0.0)?;
    let mut u: Vec<f64> = w
        .w_i
        .iter()
        .zip(k)
        .map(|(wj, kj)| (kj * (log_l + wj.ln())).exp())
        .collect();
    u.push((k[n - 1] * (log_l + s.ln())).exp());
    check_positive(&u)?;
    Ok(PointU(u))
}

/// `DΦ(u)` for the alternative transform.
pub fn jacobian_alt(u: &PointU, spec: &SystemSpec) -> Result<DMatrix<f64>, TransformError> {
    let k = alt_k(spec)?;
    let u = u.as_slice();
    check_positive(u)?;
    let n = k.len();
    let roots: Vec<f64> = u.iter().zip(k).map(|(ui, ki)| ui.powf(1.0 / ki)).collect();
    let l: f64 = roots.iter().sum();
    // ∂_j u_j^{1/k_j} = u_j^{1/k_j} / (k_j u_j)
    let droot: Vec<f64> = (0..n).map(|j| roots[j] / (k[j] * u[j])).collect();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        for j in 0..n {
            let diag = if i == j { droot[j] / l } else { 0.0 };
            m[(i, j)] = diag - roots[i] * droot[j] / (l * l);
        }
    }
    for j in 0..n {
        m[(n - 1, j)] = k[j];
    }
    Ok(m)
}
