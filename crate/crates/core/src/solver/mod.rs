//! Time integration in original and normal-form variables, and the linearised
//! Picard iteration.

mod direct;
mod integrate;
mod normal;
pub mod ops;
mod picard;
mod run;

pub use direct::{rhs_direct, DirectOperator};
pub use integrate::{auto_dt, cg_solve, step, Integrator, StepOutcome};
pub use normal::{
    apply_rank1_linear, normal_form_operator, rhs_normal_form, GeneralOperator, Rank1Frozen, Rank1Operator,
};
pub use picard::{picard_stage, run_picard, PicardOutcome, PicardRecord, PicardTrace};
pub use run::{
    field_to_w, run, CrossSample, Mode, ParabolicSample, RunReport, SeriesRow, SpecEcho, Trajectory,
};

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{DerivativeScheme, Grid, GridError};
use crate::model::ModelError;
use crate::normal_form::NormalFormError;
use crate::transforms::TransformError;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("density u[{comp}] = {value} at grid point {point} is not positive")]
    NonPositiveDensity { comp: usize, point: usize, value: f64 },
    #[error("positivity lost at t = {time}: u[{comp}] = {value:e} at grid point {point}")]
    PositivityLost {
        time: f64,
        comp: usize,
        point: usize,
        value: f64,
    },
    #[error("state left the transform domain at t = {time}: {detail}")]
    DomainExit { time: f64, detail: String },
    #[error("step rejected at t = {time} (dt = {dt:e})")]
    StepRejected { time: f64, dt: f64 },
    #[error("Picard iteration did not contract; stage horizon {horizon:e} fell below dt = {dt:e}")]
    NoContraction { horizon: f64, dt: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    NormalForm(#[from] NormalFormError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl SolverError {
    pub(crate) fn at_time(self, t: f64) -> Self {
        match self {
            SolverError::DomainExit { detail, .. } => SolverError::DomainExit { time: t, detail },
            other => other,
        }
    }
}

/// Stability-relevant rates of a state: hyperbolic speed bound and largest
/// diffusion coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Rates {
    pub v_max: f64,
    pub a_max: f64,
}

/// Parabolic coefficients for the implicit solve: `lhs_k ∂t w_k = Σ_l div(c_kl ∇w_l)`.
#[derive(Debug, Clone)]
pub struct ParabolicCoeffs {
    pub lhs: Vec<f64>,
    /// `coeff[k][l]` over grid points.
    pub coeff: Vec<Vec<Vec<f64>>>,
}

/// A semi-discrete evolution `∂t state = F(state)` on a grid.
pub trait Dynamics {
    fn grid(&self) -> &Grid;
    fn n_comps(&self) -> usize;
    fn rhs(&mut self, state: &[Vec<f64>], out: &mut [Vec<f64>]) -> Result<Rates, SolverError>;
    /// Densities `u` corresponding to `state`.
    fn densities(&mut self, state: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SolverError>;
    /// Components treated implicitly by the IMEX scheme.
    fn parabolic_block(&self) -> Range<usize>;
    fn parabolic_coefficients(&mut self, state: &[Vec<f64>]) -> Result<ParabolicCoeffs, SolverError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ExplicitRk2,
    Imex,
}

/// Fixed step or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(try_from = "TimeStepRepr", into = "TimeStepRepr")]
pub enum TimeStep {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TimeStepRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<TimeStepRepr> for TimeStep {
    type Error = String;

    fn try_from(r: TimeStepRepr) -> Result<Self, String> {
        match r {
            TimeStepRepr::Number(v) if v > 0.0 && v.is_finite() => Ok(TimeStep::Fixed(v)),
            TimeStepRepr::Number(v) => Err(format!("dt must be positive, got {v}")),
            TimeStepRepr::Text(s) if s == "auto" => Ok(TimeStep::Auto),
            TimeStepRepr::Text(s) => Err(format!("dt must be a number or \"auto\", got {s:?}")),
        }
    }
}

impl From<TimeStep> for TimeStepRepr {
    fn from(t: TimeStep) -> Self {
        match t {
            TimeStep::Auto => TimeStepRepr::Text("auto".into()),
            TimeStep::Fixed(v) => TimeStepRepr::Number(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardConfig {
    pub enabled: bool,
    pub max_iters: usize,
    pub contraction_tol: f64,
    /// Working-bound factor `K`; computed from the symmetriser when absent.
    pub kr_factor: Option<f64>,
    /// Initial stage horizon `T*`; 50 explicit steps when absent.
    pub stage_horizon: Option<f64>,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            max_iters: 12,
            contraction_tol: 1e-10,
            kr_factor: None,
            stage_horizon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub t_end: f64,
    pub dt: TimeStep,
    pub scheme: Scheme,
    pub cfl_hyp: f64,
    pub diff_number: f64,
    pub positivity_floor: f64,
    /// Coefficient `ε` of the hyperbolic fourth-order dissipation.
    pub dissipation: f64,
    /// Number of snapshot intervals in `[0, t_end]`.
    pub snapshots: usize,
    pub derivative: DerivativeScheme,
    pub picard: PicardConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            t_end: 0.05,
            dt: TimeStep::Auto,
            scheme: Scheme::ExplicitRk2,
            cfl_hyp: 0.4,
            diff_number: 0.25,
            positivity_floor: 1e-10,
            dissipation: 0.01,
            snapshots: 10,
            derivative: DerivativeScheme::Central2,
            picard: PicardConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::BadConfig(m.into()));
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return bad("t_end must be non-negative");
        }
        if !(self.cfl_hyp > 0.0 && self.cfl_hyp <= 1.0) {
            return bad("cfl_hyp must lie in (0, 1]");
        }
        if !(self.diff_number > 0.0) {
            return bad("diff_number must be positive");
        }
        if !(self.positivity_floor >= 0.0) {
            return bad("positivity_floor must be non-negative");
        }
        if !(self.dissipation >= 0.0) {
            return bad("dissipation must be non-negative");
        }
        if self.snapshots == 0 {
            return bad("snapshots must be at least 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_step_parses_auto_and_numbers() {
        #[derive(Deserialize)]
        struct W {
            dt: TimeStep,
        }
        let w: W = serde_json::from_str(r#"{"dt":"auto"}"#).unwrap();
        assert_eq!(w.dt, TimeStep::Auto);
        let w: W = serde_json::from_str(r#"{"dt":0.001}"#).unwrap();
        assert_eq!(w.dt, TimeStep::Fixed(0.001));
        assert!(serde_json::from_str::<W>(r#"{"dt":"fast"}"#).is_err());
        assert!(serde_json::from_str::<W>(r#"{"dt":-1.0}"#).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let cfg = SolverConfig {
            cfl_hyp: 1.5,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(SolverError::BadConfig(_))));
    }
}
