//! Free-energy densities, their integrals, and discrete dissipation checks.
//!
//! ```text
//! f1  = Σ π_i (u_i log u_i - u_i),   π_i = a_i / k_i
//! f2  = p² / 2
//! f3  = p log p - p
//! hBS = Σ (u_i log u_i - u_i)
//! hR  = ½ Σ b_ij u_i u_j
//! ```
//!
//! `f1`, `f2`, `f3` need a rank-one spec, `hR` a general one.

use serde::Serialize;
use thiserror::Error;

use crate::grid::FieldState;
use crate::model::{shannon_weights, EntropyKind, SystemKind, SystemSpec};

/// Default relative slack for monotonicity checks.
pub const DEFAULT_SLACK: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntropyError {
    #[error("{0:?} is not defined for this system")]
    NotApplicable(EntropyKind),
    #[error("density must be positive")]
    NonPositive,
}

fn pressure(spec: &SystemSpec, u: &[f64], kind: EntropyKind) -> Result<f64, EntropyError> {
    spec.pressure(u).ok_or(EntropyError::NotApplicable(kind))
}

pub fn free_energy_density(u: &[f64], kind: EntropyKind, spec: &SystemSpec) -> Result<f64, EntropyError> {
    if u.iter().any(|v| !(*v > 0.0)) {
        return Err(EntropyError::NonPositive);
    }
    let boltzmann = |ui: f64| ui * ui.ln() - ui;
    match kind {
        EntropyKind::Shannon => {
            let pi = shannon_weights(spec).ok_or(EntropyError::NotApplicable(kind))?;
            Ok(pi.iter().zip(u).map(|(p, ui)| p * boltzmann(*ui)).sum())
        }
        EntropyKind::Quadratic => {
            let p = pressure(spec, u, kind)?;
            Ok(0.5 * p * p)
        }
        EntropyKind::PLogP => Ok(boltzmann(pressure(spec, u, kind)?)),
        EntropyKind::BoltzmannShannon => Ok(u.iter().map(|ui| boltzmann(*ui)).sum()),
        EntropyKind::Rao => match &spec.kind {
            SystemKind::General { b } => {
                let mut acc = 0.0;
                for i in 0..spec.n {
                    for j in 0..spec.n {
                        acc += b[(i, j)] * u[i] * u[j];
                    }
                }
                Ok(0.5 * acc)
            }
            SystemKind::Rank1 { .. } => Err(EntropyError::NotApplicable(kind)),
        },
    }
}

/// Chemical potentials `μ_i = ∂f/∂u_i`.
pub fn chemical_potentials(u: &[f64], kind: EntropyKind, spec: &SystemSpec) -> Result<Vec<f64>, EntropyError> {
    if u.iter().any(|v| !(*v > 0.0)) {
        return Err(EntropyError::NonPositive);
    }
    match kind {
        EntropyKind::Shannon => {
            let pi = shannon_weights(spec).ok_or(EntropyError::NotApplicable(kind))?;
            Ok(pi.iter().zip(u).map(|(p, ui)| p * ui.ln()).collect())
        }
        EntropyKind::Quadratic => {
            let p = pressure(spec, u, kind)?;
            Ok(spec.a().unwrap_or_default().iter().map(|ai| ai * p).collect())
        }
        EntropyKind::PLogP => {
            let lp = pressure(spec, u, kind)?.ln();
            Ok(spec.a().unwrap_or_default().iter().map(|ai| ai * lp).collect())
        }
        EntropyKind::BoltzmannShannon => Ok(u.iter().map(|ui| ui.ln()).collect()),
        EntropyKind::Rao => match &spec.kind {
            SystemKind::General { .. } => {
                let mut out = vec![0.0; spec.n];
                spec.potentials(u, &mut out);
                Ok(out)
            }
            SystemKind::Rank1 { .. } => Err(EntropyError::NotApplicable(kind)),
        },
    }
}

/// `p - (-f3 + Σ u_i ∂_i f3)`, identically zero.
pub fn gibbs_duhem_residual(u: &[f64], spec: &SystemSpec) -> Result<f64, EntropyError> {
    let kind = EntropyKind::PLogP;
    let p = pressure(spec, u, kind)?;
    let f = free_energy_density(u, kind, spec)?;
    let mu = chemical_potentials(u, kind, spec)?;
    let s: f64 = u.iter().zip(&mu).map(|(ui, m)| ui * m).sum();
    Ok(p - (-f + s))
}

/// `∫ f(u) dx` by the grid Riemann sum.
pub fn total_energy(field: &FieldState, kind: EntropyKind, spec: &SystemSpec) -> Result<f64, EntropyError> {
    let mut acc = 0.0;
    for p in 0..field.grid.points() {
        acc += free_energy_density(&field.point(p), kind, spec)?;
    }
    Ok(acc * field.grid.cell_volume())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DissipationSample {
    pub t: f64,
    pub value: f64,
    /// Centered difference in the interior, one-sided at the ends.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DissipationSeries {
    pub samples: Vec<DissipationSample>,
    /// Indices `i` where `F(t_{i+1}) > F(t_i) + slack (1 + |F(t_i)|)`.
    pub violations: Vec<usize>,
    /// Largest relative increase over any interval (negative if strictly decreasing).
    pub max_relative_increase: f64,
}

impl DissipationSeries {
    pub fn is_monotone(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn dissipation_series(times: &[f64], values: &[f64], slack: f64) -> DissipationSeries {
    let m = times.len().min(values.len());
    let mut samples = Vec::with_capacity(m);
    for i in 0..m {
        let rate = if m < 2 {
            0.0
        } else if i == 0 {
            (values[1] - values[0]) / (times[1] - times[0])
        } else if i == m - 1 {
            (values[i] - values[i - 1]) / (times[i] - times[i - 1])
        } else {
            (values[i + 1] - values[i - 1]) / (times[i + 1] - times[i - 1])
        };
        samples.push(DissipationSample {
            t: times[i],
            value: values[i],
            rate,
        });
    }
    let mut violations = Vec::new();
    let mut max_rel = f64::NEG_INFINITY;
    for i in 0..m.saturating_sub(1) {
        let rel = (values[i + 1] - values[i]) / (1.0 + values[i].abs());
        max_rel = max_rel.max(rel);
        if rel > slack {
            violations.push(i);
        }
    }
    DissipationSeries {
        samples,
        violations,
        max_relative_increase: if m < 2 { 0.0 } else { max_rel },
    }
}
