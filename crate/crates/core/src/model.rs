//! Problem specifications for degenerate cross-diffusion systems.
//!
//! Two families are supported on the periodic box `[0, L)^d`:
//!
//! * `Rank1 { k, a }`: `∂t u_i = div(k_i u_i ∇p(u))` with pressure `p(u) = Σ a_i u_i`.
//! * `General { b }`: `∂t u_i = div(u_i ∇(B u)_i)` with `B` symmetric positive semidefinite.
//!
//! Asymmetric products `B·diag(π)` are not accepted here; rescale `u_i ↦ u_i / π_i`
//! before building the spec.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral_structure::sorted_symmetric_eigenvalues;

/// Relative symmetry tolerance for `B`.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Relative tolerance for negative eigenvalues of `B`.
pub const PSD_TOL: f64 = 1e-10;
/// Eigenvalues below `RANK_TOL * λ_max` count as zero.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("matrix B is not symmetric (max |B_ij - B_ji| = {max_deviation:.3e})")]
    NonSymmetric { max_deviation: f64 },
    #[error("matrix B is not positive semidefinite (min eigenvalue {min_eigenvalue:.6e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },
    #[error("coefficient {field}[{index}] = {value} must be positive")]
    NonPositiveCoefficient {
        field: &'static str,
        index: usize,
        value: f64,
    },
    #[error("bad dimension: {0}")]
    BadDimension(String),
    #[error("system must provide either (k, a) or B")]
    MissingCoefficients,
    #[error("matrix B has rank zero")]
    ZeroRank,
    #[error("symmetric eigensolver did not converge")]
    EigenFailure,
}

/// Unvalidated system description, as read from a config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawSystem {
    pub d: usize,
    #[serde(default)]
    pub domain_length: Option<f64>,
    #[serde(default)]
    pub k: Option<Vec<f64>>,
    #[serde(default)]
    pub a: Option<Vec<f64>>,
    #[serde(default, rename = "B")]
    pub b: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SystemKind {
    Rank1 { k: Vec<f64>, a: Vec<f64> },
    General { b: DMatrix<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub n: usize,
    pub d: usize,
    pub domain_length: f64,
    pub kind: SystemKind,
    pub rank: usize,
}

impl SystemSpec {
    pub fn rank1(k: Vec<f64>, a: Vec<f64>, d: usize) -> Result<Self, ModelError> {
        build_system_spec(&RawSystem {
            d,
            k: Some(k),
            a: Some(a),
            ..Default::default()
        })
    }

    pub fn general(b: DMatrix<f64>, d: usize) -> Result<Self, ModelError> {
        let rows = (0..b.nrows())
            .map(|i| b.row(i).iter().copied().collect())
            .collect();
        build_system_spec(&RawSystem {
            d,
            b: Some(rows),
            ..Default::default()
        })
    }

    pub fn with_domain_length(mut self, length: f64) -> Self {
        self.domain_length = length;
        self
    }

    pub fn is_rank1(&self) -> bool {
        matches!(self.kind, SystemKind::Rank1 { .. })
    }

    pub fn k(&self) -> Option<&[f64]> {
        match &self.kind {
            SystemKind::Rank1 { k, .. } => Some(k),
            SystemKind::General { .. } => None,
        }
    }

    pub fn a(&self) -> Option<&[f64]> {
        match &self.kind {
            SystemKind::Rank1 { a, .. } => Some(a),
            SystemKind::General { .. } => None,
        }
    }

    /// Matrix `M` with `∂t u_i = div(u_i ∇(M u)_i)`: `M_ij = k_i a_j` or `B`.
    pub fn potential_matrix(&self) -> DMatrix<f64> {
        match &self.kind {
            SystemKind::Rank1 { k, a } => DMatrix::from_fn(self.n, self.n, |i, j| k[i] * a[j]),
            SystemKind::General { b } => b.clone(),
        }
    }

    /// Chemical-potential-like driving quantities `μ_i = (M u)_i` at one point.
    pub fn potentials(&self, u: &[f64], out: &mut [f64]) {
        match &self.kind {
            SystemKind::Rank1 { k, a } => {
                let p: f64 = a.iter().zip(u).map(|(ai, ui)| ai * ui).sum();
                for (o, ki) in out.iter_mut().zip(k) {
                    *o = ki * p;
                }
            }
            SystemKind::General { b } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..self.n).map(|j| b[(i, j)] * u[j]).sum();
                }
            }
        }
    }

    /// Pressure `p(u) = Σ a_i u_i` (rank-one systems only).
    pub fn pressure(&self, u: &[f64]) -> Option<f64> {
        self.a()
            .map(|a| a.iter().zip(u).map(|(ai, ui)| ai * ui).sum())
    }
}

/// Free-energy densities available for the two system families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EntropyKind {
    /// `Σ π_i (u_i log u_i - u_i)` with `π_i = a_i / k_i`.
    Shannon,
    /// `p(u)^2 / 2`.
    Quadratic,
    /// `p log p - p`.
    PLogP,
    /// `Σ (u_i log u_i - u_i)`.
    BoltzmannShannon,
    /// `½ Σ b_ij u_i u_j`.
    Rao,
}

impl EntropyKind {
    pub const ALL: [EntropyKind; 5] = [
        EntropyKind::Shannon,
        EntropyKind::Quadratic,
        EntropyKind::PLogP,
        EntropyKind::BoltzmannShannon,
        EntropyKind::Rao,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EntropyKind::Shannon => "F_f1",
            EntropyKind::Quadratic => "F_f2",
            EntropyKind::PLogP => "F_f3",
            EntropyKind::BoltzmannShannon => "F_hBS",
            EntropyKind::Rao => "F_hR",
        }
    }
}

/// Weights `π_i = a_i / k_i` of the Shannon entropy.
pub fn shannon_weights(spec: &SystemSpec) -> Option<Vec<f64>> {
    match &spec.kind {
        SystemKind::Rank1 { k, a } => Some(a.iter().zip(k).map(|(a, k)| a / k).collect()),
        SystemKind::General { .. } => None,
    }
}

fn check_positive(field: &'static str, values: &[f64]) -> Result<(), ModelError> {
    for (index, &value) in values.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(ModelError::NonPositiveCoefficient {
                field,
                index,
                value,
            });
        }
    }
    Ok(())
}

pub fn build_system_spec(raw: &RawSystem) -> Result<SystemSpec, ModelError> {
    if raw.d == 0 || raw.d > 2 {
        return Err(ModelError::BadDimension(format!(
            "spatial dimension d = {} (supported: 1, 2)",
            raw.d
        )));
    }
    let domain_length = raw.domain_length.unwrap_or(2.0 * std::f64::consts::PI);
    if !(domain_length > 0.0) || !domain_length.is_finite() {
        return Err(ModelError::BadDimension(format!(
            "domain length {domain_length} must be positive"
        )));
    }

    match (&raw.k, &raw.a, &raw.b) {
        (Some(k), Some(a), None) => {
            if k.is_empty() || k.len() != a.len() {
                return Err(ModelError::BadDimension(format!(
                    "k has {} entries, a has {}",
                    k.len(),
                    a.len()
                )));
            }
            check_positive("k", k)?;
            check_positive("a", a)?;
            Ok(SystemSpec {
                n: k.len(),
                d: raw.d,
                domain_length,
                kind: SystemKind::Rank1 {
                    k: k.clone(),
                    a: a.clone(),
                },
                rank: 1,
            })
        }
        (None, None, Some(rows)) => {
            let n = rows.len();
            if n == 0 || rows.iter().any(|r| r.len() != n) {
                return Err(ModelError::BadDimension("B must be a non-empty square matrix".into()));
            }
            let b = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
            if b.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::BadDimension("B has non-finite entries".into()));
            }
            let scale = b.amax();
            let mut max_deviation: f64 = 0.0;
            for i in 0..n {
                for j in 0..i {
                    max_deviation = max_deviation.max((b[(i, j)] - b[(j, i)]).abs());
                }
            }
            if max_deviation > SYMMETRY_TOL * scale {
                return Err(ModelError::NonSymmetric { max_deviation });
            }
            let lambda = sorted_symmetric_eigenvalues(&b).ok_or(ModelError::EigenFailure)?;
            let lmax = lambda.last().copied().unwrap_or(0.0);
            let lmin = lambda[0];
            if lmax <= 0.0 {
                if lmin < 0.0 {
                    return Err(ModelError::NotPositiveSemidefinite { min_eigenvalue: lmin });
                }
                return Err(ModelError::ZeroRank);
            }
            if lmin < -PSD_TOL * lmax {
                return Err(ModelError::NotPositiveSemidefinite { min_eigenvalue: lmin });
            }
            let rank = lambda.iter().filter(|&&l| l > RANK_TOL * lmax).count();
            Ok(SystemSpec {
                n,
                d: raw.d,
                domain_length,
                kind: SystemKind::General { b },
                rank,
            })
        }
        (None, None, None) => Err(ModelError::MissingCoefficients),
        _ => Err(ModelError::BadDimension(
            "give either both k and a, or B, but not a mix".into(),
        )),
    }
}

/// Species permutation: `new[j] = old[order[j]]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
        }
    }

    pub fn from_order(order: Vec<usize>) -> Self {
        Self { order }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn is_identity(&self) -> bool {
        self.order.iter().enumerate().all(|(i, &j)| i == j)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.order.len()];
        for (new, &old) in self.order.iter().enumerate() {
            inv[old] = new;
        }
        Self { order: inv }
    }

    pub fn apply<T: Clone>(&self, values: &[T]) -> Vec<T> {
        self.order.iter().map(|&i| values[i].clone()).collect()
    }
}

/// Reorders species so that `k_1 ≤ … ≤ k_n` (stable); general specs are returned unchanged.
pub fn canonical_relabel(spec: &SystemSpec) -> (SystemSpec, Permutation) {
    match &spec.kind {
        SystemKind::Rank1 { k, a } => {
            let mut order: Vec<usize> = (0..spec.n).collect();
            order.sort_by(|&i, &j| k[i].total_cmp(&k[j]));
            let perm = Permutation::from_order(order);
            let relabelled = SystemSpec {
                kind: SystemKind::Rank1 {
                    k: perm.apply(k),
                    a: perm.apply(a),
                },
                ..spec.clone()
            };
            (relabelled, perm)
        }
        SystemKind::General { .. } => (spec.clone(), Permutation::identity(spec.n)),
    }
}

/// Applies a species permutation to a spec (inverse of `canonical_relabel` when given the inverse).
pub fn permute_spec(spec: &SystemSpec, perm: &Permutation) -> SystemSpec {
    match &spec.kind {
        SystemKind::Rank1 { k, a } => SystemSpec {
            kind: SystemKind::Rank1 {
                k: perm.apply(k),
                a: perm.apply(a),
            },
            ..spec.clone()
        },
        SystemKind::General { b } => {
            let o = perm.order();
            SystemSpec {
                kind: SystemKind::General {
                    b: DMatrix::from_fn(spec.n, spec.n, |i, j| b[(o[i], o[j])]),
                },
                ..spec.clone()
            }
        }
    }
}
