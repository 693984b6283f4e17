//! Changes of variables `u ↦ w` separating hyperbolic and parabolic components.
//!
//! Three variants are provided:
//!
//! * [`rank1`]: `w_i = log(ũ_i^{1/k_i} / ũ_n^{1/k_n})`, `w_n = Σ ũ_j` with `ũ = a ⊙ u`.
//! * [`general`]: `w_I = Q log u`, `w_II = P u` built on the eigenbasis of `B`.
//! * [`alt`]: `w_i = u_i^{1/k_i} / L(u)`, `w_n = Σ k_j u_j`, for `a = k`.
//!
//! [`aggregate`] merges trailing species with equal `k` so the rank-one symmetriser exists.

pub mod aggregate;
pub mod alt;
pub mod general;
pub mod rank1;

pub use aggregate::{aggregate_equal_k, Aggregation, ReconstructionPlan};
pub use alt::{jacobian_alt, phi_alt, psi_alt};
pub use general::{
    dpsi_general, jacobian_general, phi_general, psi_general, psi_general_with, GeneralInversion,
    sensitivity_at, InversionOptions, Sensitivity,
};
pub use rank1::{det_formula_rank1, jacobian_rank1, phi_rank1, psi_rank1, Rank1Jacobian, Rank1Map};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("density u[{index}] = {value} is not positive")]
    NonPositiveDensity { index: usize, value: f64 },
    #[error("parabolic variable w_n = {0} must be positive")]
    NonPositiveParabolic(f64),
    #[error("could not bracket the scalar root (target {target})")]
    RootBracketFailure { target: f64 },
    #[error("convex minimiser diverged (|X| = {norm:.3e}); w_II lies outside P R_+^n")]
    MinimizerDiverged { norm: f64 },
    #[error("convex minimiser stalled with gradient residual {residual:.3e}")]
    MinimizerStalled { residual: f64 },
    #[error("hyperbolic variables {0:?} are outside the open simplex")]
    SimplexViolation(Vec<f64>),
    #[error("singular block in sensitivity computation")]
    SingularBlock,
    #[error("transform requires a {expected} system")]
    WrongSystem { expected: &'static str },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Which change of variables a [`PointW`] belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Variant {
    Rank1Explicit,
    GeneralEigen,
    AppendixAlt,
}

/// Densities at one spatial point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointU(pub Vec<f64>);

impl PointU {
    pub fn new(u: Vec<f64>) -> Result<Self, TransformError> {
        check_positive(&u)?;
        Ok(Self(u))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Normal-form variables at one spatial point: hyperbolic block `w_I`, parabolic block `w_II`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointW {
    pub w_i: Vec<f64>,
    pub w_ii: Vec<f64>,
    pub variant: Variant,
}

impl PointW {
    pub fn new(w_i: Vec<f64>, w_ii: Vec<f64>, variant: Variant) -> Self {
        Self { w_i, w_ii, variant }
    }

    /// Concatenation `(w_I, w_II)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.w_i.clone();
        v.extend_from_slice(&self.w_ii);
        v
    }

    pub fn from_slice(w: &[f64], kernel_dim: usize, variant: Variant) -> Self {
        Self {
            w_i: w[..kernel_dim].to_vec(),
            w_ii: w[kernel_dim..].to_vec(),
            variant,
        }
    }
}

pub(crate) fn check_positive(u: &[f64]) -> Result<(), TransformError> {
    for (index, &value) in u.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(TransformError::NonPositiveDensity { index, value });
        }
    }
    Ok(())
}

/// Solves `Σ_j c_j exp(e_j t) = target` for `t`, with `c_j ≥ 0`, `e_j > 0` and at
/// least one `c_j > 0`.
///
/// The left side is convex and strictly increasing, so a bracket always exists.
/// Newton iterates are kept inside the bracket; after 50 Newton steps the
/// remaining iterations bisect.
pub(crate) fn solve_exp_sum(
    terms: &[(f64, f64)],
    target: f64,
    t0: f64,
) -> Result<f64, TransformError> {
    let fail = || TransformError::RootBracketFailure { target };
    if !(target > 0.0) || !target.is_finite() || !t0.is_finite() {
        return Err(fail());
    }
    let eval = |t: f64| -> (f64, f64) {
        let mut h = -target;
        let mut dh = 0.0;
        for &(c, e) in terms {
            let v = c * (e * t).exp();
            h += v;
            dh += e * v;
        }
        (h, dh)
    };

    let (h0, _) = eval(t0);
    let (mut lo, mut hi);
    if h0 < 0.0 {
        lo = t0;
        let mut step = std::f64::consts::LN_2;
        hi = t0 + step;
        let mut tries = 0;
        while eval(hi).0 < 0.0 {
            lo = hi;
            step *= 2.0;
            hi += step;
            tries += 1;
            if tries > 200 || !hi.is_finite() {
                return Err(fail());
            }
        }
    } else {
        hi = t0;
        let mut step = std::f64::consts::LN_2;
        lo = t0 - step;
        let mut tries = 0;
        while eval(lo).0 > 0.0 {
            hi = lo;
            step *= 2.0;
            lo -= step;
            tries += 1;
            if tries > 200 || !lo.is_finite() {
                return Err(fail());
            }
        }
    }

    // Newton from the right end converges monotonically for a convex increasing function.
    let mut t = hi;
    for iter in 0..400 {
        let (h, dh) = eval(t);
        if h == 0.0 || h.abs() <= 1e-15 * target {
            return Ok(t);
        }
        if h > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let newton = t - h / dh;
        let next = if iter < 50 && newton > lo && newton < hi && dh > 0.0 {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - t).abs() <= 4.0 * f64::EPSILON * t.abs().max(1.0) {
            return Ok(next);
        }
        t = next;
    }
    let (h, _) = eval(t);
    if h.abs() <= 1e-12 * target {
        Ok(t)
    } else {
        Err(fail())
    }
}
