//! Full runs: direct, normal-form, or both with cross-validation.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::integrate::Integrator;
use super::normal::Rank1Operator;
use super::ops::{add_flux_divergence, gradient};
use super::picard::{run_picard, PicardTrace};
use super::{DirectOperator, Dynamics, GeneralOperator, ParabolicCoeffs, Rates, SolverConfig, SolverError};
use crate::entropy::free_energy_density;
use crate::grid::{DerivativeScheme, FieldState, Grid, Space, Spectral};
use crate::model::{canonical_relabel, EntropyKind, SystemKind, SystemSpec};
use crate::spectral_structure::eigenstructure_default;
use crate::transforms::{aggregate_equal_k, phi_general, PointU, Rank1Map};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Direct,
    NormalForm,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecEcho {
    pub n: usize,
    pub d: usize,
    pub domain_length: f64,
    pub rank: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
}

impl From<&SystemSpec> for SpecEcho {
    fn from(s: &SystemSpec) -> Self {
        let b = match &s.kind {
            SystemKind::General { b } => Some((0..s.n).map(|i| b.row(i).iter().copied().collect()).collect()),
            SystemKind::Rank1 { .. } => None,
        };
        Self {
            n: s.n,
            d: s.d,
            domain_length: s.domain_length,
            rank: s.rank,
            k: s.k().map(<[f64]>::to_vec),
            a: s.a().map(<[f64]>::to_vec),
            b,
        }
    }
}

/// Invariants at one output time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    /// `∫ u_i dx` per species.
    pub masses: Vec<f64>,
    /// Values in the order of [`EntropyKind::ALL`]; `None` where not defined.
    pub entropies: Vec<Option<f64>>,
    pub min_density: f64,
    /// `(Σ_i ‖u_i‖²_{H^s})^{1/2}` with `s = 2` (d = 1) or `3` (d = 2).
    pub hs_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolicSample {
    pub t: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub label: String,
    pub times: Vec<f64>,
    /// Densities per snapshot in the caller's species order.
    #[serde(skip)]
    pub u: Vec<Vec<Vec<f64>>>,
    /// Solver variables per snapshot (`w` for the normal form).
    #[serde(skip)]
    pub state: Vec<Vec<Vec<f64>>>,
    pub series: Vec<SeriesRow>,
    /// Range of the parabolic variable after every step (rank-one normal form).
    pub parabolic: Vec<ParabolicSample>,
    pub steps: usize,
    pub dt_min: f64,
    pub dt_max: f64,
}

impl Trajectory {
    pub fn final_u(&self) -> &[Vec<f64>] {
        self.u.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossSample {
    pub t: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub spec: SpecEcho,
    pub grid: Grid,
    pub config: SolverConfig,
    pub mode: Mode,
    /// `order[j]` is the input species solved in slot `j`.
    pub permutation: Vec<usize>,
    pub direct: Option<Trajectory>,
    pub normal_form: Option<Trajectory>,
    pub cross_distance: Vec<CrossSample>,
    pub picard: Option<PicardTrace>,
}

impl RunReport {
    pub fn max_cross_distance(&self) -> Option<f64> {
        self.cross_distance.iter().map(|c| c.distance).reduce(f64::max)
    }
}

/// Pointwise forward transform of a density field into normal-form variables.
pub fn field_to_w(spec: &SystemSpec, grid: &Grid, u: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SolverError> {
    let points = grid.points();
    let mut w = vec![vec![0.0; points]; spec.n];
    match &spec.kind {
        SystemKind::Rank1 { .. } => {
            let map = Rank1Map::new(spec)?;
            let mut up = vec![0.0; spec.n];
            let mut wp = vec![0.0; spec.n];
            for p in 0..points {
                for i in 0..spec.n {
                    up[i] = u[i][p];
                }
                map.phi(&up, &mut wp)?;
                for i in 0..spec.n {
                    w[i][p] = wp[i];
                }
            }
        }
        SystemKind::General { b } => {
            let e = eigenstructure_default(b).map_err(|e| SolverError::Unsupported(e.to_string()))?;
            for p in 0..points {
                let pw = phi_general(&PointU((0..spec.n).map(|i| u[i][p]).collect()), &e)?;
                for (i, v) in pw.to_vec().into_iter().enumerate() {
                    w[i][p] = v;
                }
            }
        }
    }
    Ok(w)
}

pub(crate) fn sobolev_index(d: usize) -> u32 {
    if d == 1 {
        2
    } else {
        3
    }
}

/// Rank-one normal form on the reduced system plus linear continuity equations
/// `∂t u_i = div(κ u_i ∇p)` for the merged species.
struct Case2Operator {
    inner: Rank1Operator,
    grid: Grid,
    reduced_n: usize,
    n_total: usize,
    kappa: f64,
    spectral: Option<Spectral>,
}

impl Dynamics for Case2Operator {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn n_comps(&self) -> usize {
        self.n_total
    }

    fn rhs(&mut self, state: &[Vec<f64>], out: &mut [Vec<f64>]) -> Result<Rates, SolverError> {
        let m = self.reduced_n;
        let mut rates = self.inner.rhs(&state[..m], &mut out[..m])?;
        let potential: Vec<f64> = state[m - 1].iter().map(|p| self.kappa * p).collect();
        let grad = gradient(&self.grid, self.spectral.as_ref(), &potential);
        for g in &grad {
            rates.v_max = rates.v_max.max(g.iter().fold(0.0, |a, b| a.max(b.abs())));
        }
        for j in m..state.len() {
            out[j].iter_mut().for_each(|v| *v = 0.0);
            add_flux_divergence(&self.grid, self.spectral.as_ref(), &state[j], &potential, &mut out[j], 1.0);
        }
        Ok(rates)
    }

    fn densities(&mut self, state: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SolverError> {
        let m = self.reduced_n;
        let mut u = self.inner.densities(&state[..m])?;
        u.pop();
        u.extend(state[m..].iter().cloned());
        Ok(u)
    }

    fn parabolic_block(&self) -> Range<usize> {
        self.inner.parabolic_block()
    }

    fn parabolic_coefficients(&mut self, state: &[Vec<f64>]) -> Result<ParabolicCoeffs, SolverError> {
        self.inner.parabolic_coefficients(&state[..self.reduced_n])
    }
}

struct Recorder<'a> {
    spec: &'a SystemSpec,
    grid: Grid,
    spectral: Spectral,
    /// Maps solver slots back to input order.
    inverse_order: Vec<usize>,
}

impl Recorder<'_> {
    fn unpermute(&self, u: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        self.inverse_order.iter().map(|&j| u[j].clone()).collect()
    }

    fn row(&self, t: f64, u: &[Vec<f64>]) -> SeriesRow {
        let masses = u.iter().map(|c| self.grid.integrate(c)).collect();
        let mut entropies = Vec::with_capacity(EntropyKind::ALL.len());
        let mut point = vec![0.0; u.len()];
        for kind in EntropyKind::ALL {
            let mut acc = Some(0.0);
            for p in 0..self.grid.points() {
                for (i, c) in u.iter().enumerate() {
                    point[i] = c[p];
                }
                acc = match (acc, free_energy_density(&point, kind, self.spec)) {
                    (Some(a), Ok(f)) => Some(a + f),
                    _ => None,
                };
                if acc.is_none() {
                    break;
                }
            }
            entropies.push(acc.map(|a| a * self.grid.cell_volume()));
        }
        let s = sobolev_index(self.grid.d);
        let hs = u
            .iter()
            .map(|c| self.spectral.sobolev_norm(c, s).powi(2))
            .sum::<f64>()
            .sqrt();
        SeriesRow {
            t,
            masses,
            entropies,
            min_density: u.iter().flatten().copied().fold(f64::INFINITY, f64::min),
            hs_norm: hs,
        }
    }
}

fn check_positivity(u: &[Vec<f64>], floor: f64, t: f64, inverse_order: &[usize]) -> Result<(), SolverError> {
    for (slot, c) in u.iter().enumerate() {
        for (point, &value) in c.iter().enumerate() {
            if !(value >= floor) || !value.is_finite() {
                let comp = inverse_order.iter().position(|&j| j == slot).unwrap_or(slot);
                return Err(SolverError::PositivityLost {
                    time: t,
                    comp,
                    point,
                    value,
                });
            }
        }
    }
    Ok(())
}

fn integrate(
    label: &str,
    dynamics: &mut dyn Dynamics,
    mut state: Vec<Vec<f64>>,
    cfg: &SolverConfig,
    rec: &Recorder,
    track_parabolic: bool,
) -> Result<Trajectory, SolverError> {
    let mut traj = Trajectory {
        label: label.to_string(),
        times: Vec::new(),
        u: Vec::new(),
        state: Vec::new(),
        series: Vec::new(),
        parabolic: Vec::new(),
        steps: 0,
        dt_min: f64::INFINITY,
        dt_max: 0.0,
    };
    let block = dynamics.parabolic_block();
    let sample_parabolic = |t: f64, state: &[Vec<f64>], traj: &mut Trajectory| {
        if track_parabolic {
            let vals = state[block.clone()].iter().flatten().copied();
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            traj.parabolic.push(ParabolicSample { t, min: lo, max: hi });
        }
    };
    let record = |t: f64, state: &[Vec<f64>], dens: Vec<Vec<f64>>, traj: &mut Trajectory| {
        let u = rec.unpermute(dens);
        traj.series.push(rec.row(t, &u));
        traj.times.push(t);
        traj.u.push(u);
        traj.state.push(state.to_vec());
    };

    let dens = dynamics.densities(&state).map_err(|e| e.at_time(0.0))?;
    check_positivity(&dens, cfg.positivity_floor, 0.0, &rec.inverse_order)?;
    sample_parabolic(0.0, &state, &mut traj);
    record(0.0, &state, dens, &mut traj);

    let mut integ = Integrator::new(dynamics, cfg.scheme);
    let mut t = 0.0;
    for i in 1..=cfg.snapshots {
        if cfg.t_end == 0.0 {
            break;
        }
        let target = cfg.t_end * i as f64 / cfg.snapshots as f64;
        while t < target - 1e-13 * cfg.t_end {
            let out = integ
                .advance(dynamics, &mut state, cfg, target - t)
                .map_err(|e| match e {
                    SolverError::StepRejected { dt, .. } => SolverError::StepRejected { time: t, dt },
                    other => other.at_time(t),
                })?;
            if out.dt < 1e-12 && target - t > 1e-12 {
                return Err(SolverError::StepRejected { time: t, dt: out.dt });
            }
            t = if target - (t + out.dt) <= 1e-13 * cfg.t_end { target } else { t + out.dt };
            traj.steps += 1;
            traj.dt_min = traj.dt_min.min(out.dt);
            traj.dt_max = traj.dt_max.max(out.dt);
            let dens = dynamics.densities(&state).map_err(|e| e.at_time(t))?;
            check_positivity(&dens, cfg.positivity_floor, t, &rec.inverse_order)?;
            sample_parabolic(t, &state, &mut traj);
            if t == target {
                record(t, &state, dens, &mut traj);
            }
        }
    }
    if traj.steps == 0 {
        traj.dt_min = 0.0;
    }
    Ok(traj)
}

fn max_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// Runs the configured solvers from the density field `u0`.
pub fn run(spec: &SystemSpec, u0: &FieldState, cfg: &SolverConfig, mode: Mode) -> Result<RunReport, SolverError> {
    cfg.validate()?;
    if u0.space != Space::U || u0.n_comps() != spec.n {
        return Err(SolverError::BadConfig(format!(
            "initial field must hold {} densities",
            spec.n
        )));
    }
    if u0.grid.d != spec.d {
        return Err(SolverError::BadConfig("grid and system dimensions differ".into()));
    }
    let grid = u0.grid;
    let (spec_c, perm) = canonical_relabel(spec);
    let order = perm.order().to_vec();
    let state_u: Vec<Vec<f64>> = perm.apply(&u0.comps);
    let rec = Recorder {
        spec,
        grid,
        spectral: Spectral::new(grid),
        inverse_order: perm.inverse().order().to_vec(),
    };
    let spectral_opt = (cfg.derivative == DerivativeScheme::Spectral).then(|| Spectral::new(grid));

    let direct = if mode != Mode::NormalForm {
        let mut op = DirectOperator::new(&spec_c, grid, cfg.derivative);
        let direct_cfg = SolverConfig {
            scheme: super::Scheme::ExplicitRk2,
            ..cfg.clone()
        };
        Some(integrate("direct", &mut op, state_u.clone(), &direct_cfg, &rec, false)?)
    } else {
        None
    };

    let normal_form = if mode != Mode::Direct {
        let traj = match &spec_c.kind {
            SystemKind::Rank1 { .. } => {
                let agg = aggregate_equal_k(&spec_c, &state_u);
                let w_red = field_to_w(&agg.reduced_spec, &grid, &agg.reduced_field).map_err(|e| e.at_time(0.0))?;
                let inner = Rank1Operator::new(&agg.reduced_spec, grid, cfg.derivative, cfg.dissipation)?;
                if agg.plan.is_trivial() {
                    let mut op = inner;
                    integrate("normal_form", &mut op, w_red, cfg, &rec, true)?
                } else {
                    let mut state = w_red;
                    state.extend(state_u[agg.plan.first_merged..].iter().cloned());
                    let mut op = Case2Operator {
                        reduced_n: agg.reduced_spec.n,
                        n_total: state.len(),
                        kappa: agg.plan.kappa,
                        inner,
                        grid,
                        spectral: spectral_opt.clone(),
                    };
                    integrate("normal_form", &mut op, state, cfg, &rec, true)?
                }
            }
            SystemKind::General { b } => {
                let e = eigenstructure_default(b).map_err(|e| SolverError::Unsupported(e.to_string()))?;
                let w0 = field_to_w(&spec_c, &grid, &state_u).map_err(|e| e.at_time(0.0))?;
                let mut op = GeneralOperator::new(e, grid, cfg.derivative, cfg.dissipation);
                integrate("normal_form", &mut op, w0, cfg, &rec, false)?
            }
        };
        Some(traj)
    } else {
        None
    };

    let cross_distance = match (&direct, &normal_form) {
        (Some(d), Some(n)) => d
            .times
            .iter()
            .zip(&d.u)
            .zip(&n.u)
            .map(|((t, a), b)| CrossSample {
                t: *t,
                distance: max_distance(a, b),
            })
            .collect(),
        _ => Vec::new(),
    };

    let picard = if cfg.picard.enabled && spec.is_rank1() {
        Some(run_picard(spec, u0, cfg)?.trace)
    } else {
        None
    };

    Ok(RunReport {
        spec: SpecEcho::from(spec),
        grid,
        config: cfg.clone(),
        mode,
        permutation: order,
        direct,
        normal_form,
        cross_distance,
        picard,
    })
}
