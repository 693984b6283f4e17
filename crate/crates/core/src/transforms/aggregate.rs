//! Merging trailing species with equal mobility.
//!
//! When `k_m = … = k_n` the diagonal symmetriser `k_i u_i / (k_n - k_i)` does not
//! exist. The merged density `U = Σ_{i≥m} a_i u_i` carries coefficient `k_n` and
//! unit pressure weight; the merged species are recovered afterwards by solving
//! the linear continuity equations `∂t u_i = div(k_n u_i ∇p)` with `p` taken
//! from the reduced solution.

use crate::model::{SystemKind, SystemSpec};

/// How to undo an aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionPlan {
    pub original_n: usize,
    /// 0-based index of the first merged species.
    pub first_merged: usize,
    /// Pressure weights `a_i` of the merged species.
    pub merged_a: Vec<f64>,
    /// Common mobility of the merged species.
    pub kappa: f64,
}

impl ReconstructionPlan {
    pub fn is_trivial(&self) -> bool {
        self.first_merged + 1 == self.original_n
    }

    pub fn merged_count(&self) -> usize {
        self.original_n - self.first_merged
    }

    /// Merged density from the original species at one point.
    pub fn merge_point(&self, u: &[f64]) -> f64 {
        u[self.first_merged..]
            .iter()
            .zip(&self.merged_a)
            .map(|(ui, ai)| ai * ui)
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct Aggregation {
    pub reduced_spec: SystemSpec,
    /// Reduced components, each over all grid points.
    pub reduced_field: Vec<Vec<f64>>,
    pub plan: ReconstructionPlan,
}

/// Merges the equal-`k` tail of a rank-one spec sorted by `k`.
///
/// General specs and specs without an equal tail are returned unchanged with a
/// trivial plan.
pub fn aggregate_equal_k(spec: &SystemSpec, field: &[Vec<f64>]) -> Aggregation {
    let (k, a) = match &spec.kind {
        SystemKind::Rank1 { k, a } => (k, a),
        SystemKind::General { .. } => {
            return Aggregation {
                reduced_spec: spec.clone(),
                reduced_field: field.to_vec(),
                plan: ReconstructionPlan {
                    original_n: spec.n,
                    first_merged: spec.n - 1,
                    merged_a: vec![1.0],
                    kappa: 0.0,
                },
            }
        }
    };
    let n = spec.n;
    let kappa = k[n - 1];
    let mut m = n - 1;
    while m > 0 && k[m - 1] == kappa {
        m -= 1;
    }
    let plan = ReconstructionPlan {
        original_n: n,
        first_merged: m,
        merged_a: a[m..].to_vec(),
        kappa,
    };
    if plan.is_trivial() {
        return Aggregation {
            reduced_spec: spec.clone(),
            reduced_field: field.to_vec(),
            plan,
        };
    }
    let mut k_red = k[..m].to_vec();
    k_red.push(kappa);
    let mut a_red = a[..m].to_vec();
    a_red.push(1.0);
    let reduced_spec = SystemSpec {
        n: m + 1,
        kind: SystemKind::Rank1 { k: k_red, a: a_red },
        ..spec.clone()
    };
    let mut reduced_field = field[..m].to_vec();
    let points = field.first().map_or(0, Vec::len);
    let merged = (0..points)
        .map(|p| (m..n).map(|i| a[i] * field[i][p]).sum())
        .collect();
    reduced_field.push(merged);
    Aggregation {
        reduced_spec,
        reduced_field,
        plan,
    }
}
