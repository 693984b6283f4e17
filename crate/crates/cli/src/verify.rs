//! Certification battery for a system spec, and offline validation of a report
//! directory.

use std::f64::consts::PI;
use std::path::Path;

use crossdiff_core::entropy::{dissipation_series, gibbs_duhem_residual};
use crossdiff_core::grid::{read_binary, read_csv, DerivativeScheme, Grid, Space};
use crossdiff_core::model::{canonical_relabel, SystemKind, SystemSpec};
use crossdiff_core::normal_form::{certify, coeffs_general_at, coeffs_rank1_at, NormalFormCoeffs};
use crossdiff_core::solver::{field_to_w, rhs_direct, rhs_normal_form, SpecEcho, Trajectory};
use crossdiff_core::spectral_structure::{
    eigen_residuals, eigenstructure_default, verify_block_identities, EigenStructure,
};
use crossdiff_core::transforms::{
    aggregate_equal_k, jacobian_general, jacobian_rank1, phi_alt, phi_general, phi_rank1, psi_alt, psi_general,
    psi_rank1, PointU, PointW, Variant,
};
use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::report::ReportFile;

pub const DEFAULT_SEED: u64 = 20_240_601;
pub const VERIFY_FILE: &str = "verify.json";

const SAMPLES: usize = 400;
const ROUND_TRIP_TOL: f64 = 1e-10;
const DETERMINANT_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;
const IDENTITY_TOL: f64 = 1e-12;
const EIGEN_TOL: f64 = 1e-10;
const PUSH_FORWARD_TOL: f64 = 1e-6;
const GIBBS_DUHEM_TOL: f64 = 1e-10;
const MASS_TOL: f64 = 1e-8;
const ENTROPY_SLACK: f64 = 1e-8;
const CROSS_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Measured deviation (or extremal value for positivity checks).
    pub value: f64,
    pub tol: f64,
    pub detail: String,
}

impl Check {
    /// `value <= tol`.
    fn at_most(name: &str, value: f64, tol: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass: value <= tol,
            value,
            tol,
            detail: detail.into(),
        }
    }

    /// `value > tol`.
    fn above(name: &str, value: f64, tol: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass: value > tol,
            value,
            tol,
            detail: detail.into(),
        }
    }

    fn failed(name: &str, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass: false,
            value: f64::NAN,
            tol: f64::NAN,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub source: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl VerifyReport {
    fn new(source: String, seed: u64, checks: Vec<Check>) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        Self {
            source,
            seed,
            checks,
            pass,
        }
    }

    pub fn print(&self) {
        for c in &self.checks {
            let status = if c.pass { "PASS" } else { "FAIL" };
            let value = if c.value.is_nan() { "-".to_string() } else { format!("{:.3e}", c.value) };
            println!("[{status}] {:<28} {:>11}  {}", c.name, value, c.detail);
        }
        let failed = self.checks.iter().filter(|c| !c.pass).count();
        println!("{} checks, {} failed", self.checks.len(), failed);
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BatteryOptions {
    pub seed: u64,
    /// Skews one hyperbolic coefficient before certification.
    pub corrupt_a1: bool,
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

fn random_u(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-2.0..2.0f64).exp()).collect()
}

fn smooth_field(r: &mut ChaCha8Rng, grid: &Grid) -> Vec<f64> {
    let base = r.random_range(0.5..2.0);
    let modes: Vec<([f64; 2], f64, f64)> = (0..4)
        .map(|_| {
            let kx = r.random_range(0..4) as f64;
            let ky = if grid.d == 2 { r.random_range(0..4) as f64 } else { 0.0 };
            ([kx, ky], r.random_range(-1.0..1.0), r.random_range(0.0..2.0 * PI))
        })
        .collect();
    let total: f64 = modes.iter().map(|m| m.1.abs()).sum::<f64>().max(1e-12);
    let scale = 2.0 * PI / grid.length;
    grid.sample(|x| {
        let y = x.get(1).copied().unwrap_or(0.0);
        let s: f64 = modes
            .iter()
            .map(|(k, c, ph)| c * (scale * (k[0] * x[0] + k[1] * y) + ph).cos())
            .sum();
        base * (1.0 + 0.3 * s / total)
    })
}

fn corrupt(c: &mut NormalFormCoeffs) {
    match c.a1.first_mut() {
        Some(a1) if a1.nrows() >= 2 => {
            let bump = 0.1 * (1.0 + a1.amax());
            a1[(0, 1)] += bump;
        }
        _ => c.a0 *= -1.0,
    }
}

fn certify_checks(coeffs: &[NormalFormCoeffs], opts: BatteryOptions) -> Vec<Check> {
    let mut worst = [0.0f64; 3];
    let mut min_a0 = f64::INFINITY;
    let mut min_parab = f64::INFINITY;
    for c in coeffs {
        let mut c = c.clone();
        if opts.corrupt_a1 {
            corrupt(&mut c);
        }
        let r = certify(&c);
        worst[0] = worst[0].max(r.a0_asymmetry);
        worst[1] = worst[1].max(r.a1_asymmetry);
        worst[2] = worst[2].max(r.parab_asymmetry);
        min_a0 = min_a0.min(r.a0_min_eigenvalue);
        min_parab = min_parab.min(r.parab_min_eigenvalue);
    }
    let detail = format!("{} sampled states", coeffs.len());
    vec![
        Check::at_most("a0_symmetry", worst[0], SYMMETRY_TOL, detail.clone()),
        Check::at_most("a1_symmetry", worst[1], SYMMETRY_TOL, detail.clone()),
        Check::at_most("parabolic_symmetry", worst[2], SYMMETRY_TOL, detail.clone()),
        Check::above("a0_positive_definite", min_a0, 0.0, "minimum eigenvalue"),
        Check::above("parabolic_positive_definite", min_parab, 0.0, "minimum eigenvalue"),
    ]
}

fn push_forward_check(
    spec: &SystemSpec,
    jac: impl Fn(&[f64]) -> Option<DMatrix<f64>>,
    r: &mut ChaCha8Rng,
) -> Check {
    let n_grid = if spec.d == 1 { 128 } else { 32 };
    let grid = Grid::new(spec.d, n_grid, spec.domain_length).expect("valid grid");
    let u: Vec<Vec<f64>> = (0..spec.n).map(|_| smooth_field(r, &grid)).collect();
    let result = (|| {
        let ut = rhs_direct(&grid, &u, spec, DerivativeScheme::Spectral)?;
        let w = field_to_w(spec, &grid, &u)?;
        let wt = rhs_normal_form(&grid, &w, spec, DerivativeScheme::Spectral, 0.0)?;
        Ok::<_, crossdiff_core::solver::SolverError>((ut, wt))
    })();
    let (ut, wt) = match result {
        Ok(v) => v,
        Err(e) => return Check::failed("push_forward", e.to_string()),
    };
    let mut worst: f64 = 0.0;
    for p in 0..grid.points() {
        let up: Vec<f64> = u.iter().map(|c| c[p]).collect();
        let Some(j) = jac(&up) else {
            return Check::failed("push_forward", "Jacobian unavailable");
        };
        let pushed = j * DVector::from_fn(spec.n, |i, _| ut[i][p]);
        for i in 0..spec.n {
            worst = worst.max((pushed[i] - wt[i][p]).abs());
        }
    }
    Check::at_most(
        "push_forward",
        worst,
        PUSH_FORWARD_TOL,
        format!("max |DPhi u_t - w_t| on {n_grid}^{} spectral grid", spec.d),
    )
}

fn gibbs_duhem_check(spec: &SystemSpec, r: &mut ChaCha8Rng) -> Check {
    let mut worst: f64 = 0.0;
    for _ in 0..SAMPLES {
        let u = random_u(r, spec.n);
        match gibbs_duhem_residual(&u, spec) {
            Ok(res) => worst = worst.max(res.abs()),
            Err(e) => return Check::failed("gibbs_duhem", e.to_string()),
        }
    }
    Check::at_most("gibbs_duhem", worst, GIBBS_DUHEM_TOL, "pressure vs -f + u.grad f")
}

fn rank1_battery(spec: &SystemSpec, opts: BatteryOptions, r: &mut ChaCha8Rng) -> Vec<Check> {
    let (spec, _) = canonical_relabel(spec);
    let n = spec.n;
    let (k, a) = (spec.k().unwrap().to_vec(), spec.a().unwrap().to_vec());
    let mut checks = Vec::new();

    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..SAMPLES {
        let u = random_u(r, n);
        match phi_rank1(&PointU(u.clone()), &spec).and_then(|w| psi_rank1(&w, &spec)) {
            Ok(back) => worst = worst.max(rel_err(back.as_slice(), &u)),
            Err(_) => failures += 1,
        }
        let mut w: Vec<f64> = (0..n - 1).map(|_| r.random_range(-2.0..2.0)).collect();
        w.push(r.random_range(0.1..10.0));
        let pw = PointW::from_slice(&w, n - 1, Variant::Rank1Explicit);
        match psi_rank1(&pw, &spec).and_then(|u| phi_rank1(&u, &spec)) {
            Ok(again) => worst = worst.max(rel_err(&again.to_vec(), &w)),
            Err(_) => failures += 1,
        }
    }
    checks.push(if failures > 0 {
        Check::failed("round_trip", format!("{failures} inversions failed"))
    } else {
        Check::at_most("round_trip", worst, ROUND_TRIP_TOL, "Psi(Phi(u)) and Phi(Psi(w))")
    });

    if k == a {
        let mut worst: f64 = 0.0;
        let mut failures = 0;
        for _ in 0..SAMPLES {
            let u = random_u(r, n);
            match phi_alt(&PointU(u.clone()), &spec).and_then(|w| psi_alt(&w, &spec)) {
                Ok(back) => worst = worst.max(rel_err(back.as_slice(), &u)),
                Err(_) => failures += 1,
            }
        }
        checks.push(if failures > 0 {
            Check::failed("round_trip_alt", format!("{failures} inversions failed"))
        } else {
            Check::at_most("round_trip_alt", worst, ROUND_TRIP_TOL, "simplex variables, a = k")
        });
    }

    let mut worst: f64 = 0.0;
    for _ in 0..SAMPLES {
        let u = random_u(r, n);
        match jacobian_rank1(&PointU(u), &spec) {
            Ok(j) => worst = worst.max((j.det_formula - j.det_numeric).abs() / j.det_numeric.abs()),
            Err(e) => {
                worst = f64::INFINITY;
                checks.push(Check::failed("determinant", e.to_string()));
                break;
            }
        }
    }
    if worst.is_finite() {
        checks.push(Check::at_most("determinant", worst, DETERMINANT_TOL, "closed form vs LU"));
    }

    // Equal trailing mobilities are merged before the normal form exists.
    let agg = aggregate_equal_k(&spec, &vec![vec![1.0]; n]);
    let reduced = agg.reduced_spec;
    let rk = reduced.k().unwrap().to_vec();
    let ra = reduced.a().unwrap().to_vec();
    let mut coeffs = Vec::with_capacity(SAMPLES);
    for _ in 0..SAMPLES {
        let ut: Vec<f64> = random_u(r, reduced.n).iter().zip(&ra).map(|(u, a)| u * a).collect();
        let grad: Vec<f64> = (0..spec.d).map(|_| r.random_range(-3.0..3.0)).collect();
        match coeffs_rank1_at(&ut, &rk, &grad) {
            Ok(c) => coeffs.push(c),
            Err(e) => {
                checks.push(Check::failed("certify", e.to_string()));
                break;
            }
        }
    }
    if coeffs.len() == SAMPLES {
        checks.extend(certify_checks(&coeffs, opts));
    }

    checks.push(push_forward_check(
        &reduced,
        |u| jacobian_rank1(&PointU(u.to_vec()), &reduced).ok().map(|j| j.matrix),
        r,
    ));
    checks.push(gibbs_duhem_check(&spec, r));
    checks
}

fn general_battery(
    spec: &SystemSpec,
    b: &DMatrix<f64>,
    e: &EigenStructure,
    opts: BatteryOptions,
    r: &mut ChaCha8Rng,
) -> Vec<Check> {
    let n = spec.n;
    let mut checks = Vec::new();
    let blocks = verify_block_identities(e);
    checks.push(Check::at_most(
        "block_identities",
        blocks.max(),
        IDENTITY_TOL,
        format!(
            "QQt {:.1e}, PPt {:.1e}, QtQ+PtP {:.1e}, PQt {:.1e}, QPt {:.1e}",
            blocks.qqt, blocks.ppt, blocks.completeness, blocks.pqt, blocks.qpt
        ),
    ));
    let res = eigen_residuals(e, b);
    let scale = b.amax().max(1.0);
    checks.push(Check::at_most(
        "eigen_residuals",
        res.kernel.max(res.range).max(res.reconstruction) / scale,
        EIGEN_TOL,
        format!("rank {} of {n}", e.rank),
    ));

    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..SAMPLES {
        let u = random_u(r, n);
        match phi_general(&PointU(u.clone()), e) {
            Ok(w) => match psi_general(&w, e) {
                Ok(back) => worst = worst.max(rel_err(back.as_slice(), &u)),
                Err(_) => failures += 1,
            },
            Err(_) => failures += 1,
        }
        let u2 = DVector::from_vec(random_u(r, n));
        let w_i: Vec<f64> = (0..e.kernel_dim()).map(|_| r.random_range(-2.0..2.0)).collect();
        let w_ii: Vec<f64> = (&e.p * u2).iter().copied().collect();
        let pw = PointW::new(w_i, w_ii, Variant::GeneralEigen);
        match psi_general(&pw, e).and_then(|u| phi_general(&u, e)) {
            Ok(again) => worst = worst.max(rel_err(&again.to_vec(), &pw.to_vec())),
            Err(_) => failures += 1,
        }
    }
    checks.push(if failures > 0 {
        Check::failed("round_trip", format!("{failures} inversions failed"))
    } else {
        Check::at_most("round_trip", worst, ROUND_TRIP_TOL, "Psi(Phi(u)) and Phi(Psi(w))")
    });

    let mut coeffs = Vec::with_capacity(SAMPLES);
    for _ in 0..SAMPLES {
        let u = DVector::from_vec(random_u(r, n));
        let grads: Vec<DVector<f64>> = (0..spec.d)
            .map(|_| DVector::from_fn(e.rank, |_, _| r.random_range(-3.0..3.0)))
            .collect();
        match coeffs_general_at(&u, e, &grads) {
            Ok(c) => coeffs.push(c),
            Err(err) => {
                checks.push(Check::failed("certify", err.to_string()));
                break;
            }
        }
    }
    if coeffs.len() == SAMPLES {
        checks.extend(certify_checks(&coeffs, opts));
    }

    checks.push(push_forward_check(
        spec,
        |u| jacobian_general(&PointU(u.to_vec()), e).ok(),
        r,
    ));
    checks
}

pub fn run_battery(spec: &SystemSpec, source: String, opts: BatteryOptions) -> VerifyReport {
    let mut r = ChaCha8Rng::seed_from_u64(opts.seed);
    let checks = match &spec.kind {
        SystemKind::Rank1 { .. } => rank1_battery(spec, opts, &mut r),
        SystemKind::General { b } => match eigenstructure_default(b) {
            Ok(e) => general_battery(spec, b, &e, opts, &mut r),
            Err(err) => vec![Check::failed("eigenstructure", err.to_string())],
        },
    };
    VerifyReport::new(source, opts.seed, checks)
}

/// Rows `c` such that `c · (∫u dx)` is conserved by the normal-form solver:
/// `a` for rank-one systems, the rows of `P` otherwise.
fn conserved_combinations(spec: &SpecEcho) -> Vec<Vec<f64>> {
    if let Some(a) = &spec.a {
        return vec![a.clone()];
    }
    let Some(rows) = &spec.b else { return Vec::new() };
    let b = DMatrix::from_fn(spec.n, spec.n, |i, j| rows[i][j]);
    match eigenstructure_default(&b) {
        Ok(e) => (0..e.rank).map(|i| e.p.row(i).iter().copied().collect()).collect(),
        Err(_) => Vec::new(),
    }
}

fn trajectory_checks(
    dir: &Path,
    file: &ReportFile,
    traj: &Trajectory,
    grid: Grid,
    conserved: &[Vec<f64>],
) -> Vec<Check> {
    let label = &traj.label;
    let name = |s: &str| format!("{label}.{s}");
    let mut checks = Vec::new();

    let increasing = traj.times.windows(2).all(|w| w[1] > w[0]);
    let consistent = traj.series.len() == traj.times.len()
        && traj.series.iter().zip(&traj.times).all(|(s, t)| s.t == *t);
    checks.push(Check {
        name: name("times"),
        pass: increasing && consistent && !traj.times.is_empty(),
        value: traj.times.len() as f64,
        tol: f64::NAN,
        detail: format!("strictly increasing: {increasing}, series aligned: {consistent}"),
    });

    let min_density = traj.series.iter().map(|s| s.min_density).fold(f64::INFINITY, f64::min);
    checks.push(Check::above(&name("positivity"), min_density, 0.0, "minimum density over snapshots"));

    if let (Some(first), Some(last)) = (traj.series.first(), traj.series.last()) {
        let drift = |a: f64, b: f64| (b - a).abs() / a.abs().max(1e-300);
        let parabolic_drift = conserved
            .iter()
            .map(|row| {
                let dot = |m: &[f64]| row.iter().zip(m).map(|(c, m)| c * m).sum::<f64>();
                let scale: f64 = row.iter().zip(&first.masses).map(|(c, m)| (c * m).abs()).sum();
                (dot(&last.masses) - dot(&first.masses)).abs() / scale.max(1e-300)
            })
            .fold(0.0, f64::max);
        let species_drift = first
            .masses
            .iter()
            .zip(&last.masses)
            .map(|(a, b)| drift(*a, *b))
            .fold(0.0, f64::max);
        // The normal form is conservative only in its parabolic variables.
        if label == "direct" {
            checks.push(Check::at_most(&name("mass"), species_drift, MASS_TOL, "relative drift per species"));
        } else {
            checks.push(Check::at_most(
                &name("mass"),
                parabolic_drift,
                MASS_TOL,
                "relative drift of the parabolic-variable masses",
            ));
        }

        for (slot, kind) in crossdiff_core::model::EntropyKind::ALL.iter().enumerate() {
            let values: Option<Vec<f64>> = traj.series.iter().map(|s| s.entropies[slot]).collect();
            if let Some(values) = values {
                let d = dissipation_series(&traj.times, &values, ENTROPY_SLACK);
                checks.push(Check::at_most(
                    &name(kind.label()),
                    d.max_relative_increase,
                    ENTROPY_SLACK,
                    "largest relative increase between snapshots",
                ));
            }
        }
    }

    let entries: Vec<_> = file.snapshots.iter().filter(|e| &e.label == label).collect();
    let mut problem = None;
    if entries.len() != traj.times.len() {
        problem = Some(format!("{} snapshots indexed for {} times", entries.len(), traj.times.len()));
    }
    let mut worst: f64 = 0.0;
    for (entry, row) in entries.iter().zip(&traj.series) {
        for rel in &entry.files {
            let path = dir.join(rel);
            let state = if rel.ends_with(".bin") {
                read_binary(&path, grid.length, Space::U)
            } else {
                read_csv(&path, grid, Space::U)
            };
            match state {
                Ok(s) => {
                    for (i, m) in row.masses.iter().enumerate() {
                        let mass = grid.integrate(&s.comps[i]);
                        worst = worst.max((mass - m).abs() / m.abs().max(1.0));
                    }
                    worst = worst.max((s.min() - row.min_density).abs());
                }
                Err(e) => problem = Some(format!("{rel}: {e}")),
            }
        }
    }
    checks.push(match problem {
        Some(p) => Check::failed(&name("snapshots"), p),
        None => Check::at_most(&name("snapshots"), worst, 1e-12, "snapshot files reproduce the series"),
    });
    checks
}

/// Re-validates a report directory without running the solver.
pub fn verify_report_dir(dir: &Path) -> VerifyReport {
    let source = dir.display().to_string();
    let file = match crate::report::read_json(dir) {
        Ok(f) => f,
        Err(e) => return VerifyReport::new(source, 0, vec![Check::failed("report", e)]),
    };
    let mut checks = Vec::new();
    checks.push(Check {
        name: "status".into(),
        pass: file.status == "ok" && file.exit_code == 0,
        value: file.exit_code as f64,
        tol: 0.0,
        detail: file.error.clone().unwrap_or_else(|| file.status.clone()),
    });
    let Some(run) = &file.run else {
        checks.push(Check::failed("run", "report holds no run"));
        return VerifyReport::new(source, file.seed, checks);
    };
    for rel in &file.series_files {
        if !dir.join(rel).is_file() {
            checks.push(Check::failed("series_files", format!("{rel} is missing")));
        }
    }
    let conserved = conserved_combinations(&run.spec);
    for traj in [&run.direct, &run.normal_form].into_iter().flatten() {
        checks.extend(trajectory_checks(dir, &file, traj, run.grid, &conserved));
    }
    if let Some(max) = run.max_cross_distance() {
        checks.push(Check::at_most("cross_distance", max, CROSS_TOL, "max |u_direct - Psi(w)|"));
    }
    if let Some(trace) = &run.picard {
        let max_hs = trace.records.iter().map(|r| r.max_hs_norm).fold(0.0, f64::max);
        checks.push(Check::at_most("picard.bound", max_hs, trace.bound(), "max H^s norm vs K R"));
        let late = trace
            .records
            .iter()
            .filter(|r| r.iter >= 4)
            .filter_map(|r| r.ratio)
            .fold(0.0, f64::max);
        checks.push(Check {
            name: "picard.contraction".into(),
            pass: trace.converged || late < 1.0,
            value: late,
            tol: 1.0,
            detail: format!("converged: {}, horizon {:.3e}", trace.converged, trace.horizon),
        });
    }
    VerifyReport::new(source, file.seed, checks)
}
