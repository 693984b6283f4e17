//! Acceptance suite: one line per criterion, non-zero exit on any failure.
//!
//! Reference values come from test-side oracles: complex-step Jacobians of the
//! forward maps, central differences of the inverse maps, and independent scalar
//! runs.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use crossdiff_core::entropy::dissipation_series;
use crossdiff_core::grid::{DerivativeScheme, FieldState, Grid, Space};
use crossdiff_core::model::{EntropyKind, SystemKind, SystemSpec};
use crossdiff_core::normal_form::{coeffs_general_at, coeffs_rank1_at};
use crossdiff_core::solver::{
    field_to_w, rhs_direct, rhs_normal_form, run, run_picard, Mode, PicardConfig, SolverConfig, TimeStep,
};
use crossdiff_core::spectral_structure::{eigenstructure_default, EigenStructure};
use crossdiff_core::transforms::{
    det_formula_rank1, jacobian_rank1, phi_alt, phi_general, phi_rank1, psi_alt, psi_general, psi_general_with,
    psi_rank1, sensitivity_at, InversionOptions, PointU, PointW, Variant,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_u(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| (r.random_range(-2.0..2.0f64)).exp()).collect()
}

/// Strictly increasing mobilities with gaps of at least 0.1.
fn random_k(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut k = Vec::with_capacity(n);
    let mut acc = r.random_range(0.3..1.5);
    for _ in 0..n {
        k.push(acc);
        acc += r.random_range(0.1..1.0);
    }
    k
}

fn random_rank1(r: &mut ChaCha8Rng, n: usize, d: usize) -> SystemSpec {
    let k = random_k(r, n);
    let a = (0..n).map(|_| r.random_range(0.3..3.0)).collect();
    SystemSpec::rank1(k, a, d).unwrap().with_domain_length(2.0 * PI)
}

fn random_psd(r: &mut ChaCha8Rng, n: usize, rank: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(n, n);
    for _ in 0..rank {
        let c = DVector::from_fn(n, |_, _| r.random_range(-1.0..1.0));
        let s = r.random_range(0.5..2.0);
        b += &c * c.transpose() * s;
    }
    b
}

fn random_general(r: &mut ChaCha8Rng, n: usize, rank: usize, d: usize) -> (SystemSpec, EigenStructure) {
    loop {
        let b = random_psd(r, n, rank);
        let Ok(e) = eigenstructure_default(&b) else { continue };
        if e.rank != rank || e.lambda_range().iter().any(|l| *l < 0.05) {
            continue;
        }
        let spec = SystemSpec::general(b, d).unwrap().with_domain_length(2.0 * PI);
        return (spec, e);
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

// ---- complex-step forward maps ----

fn phi_rank1_c(u: &[Complex64], k: &[f64], a: &[f64]) -> Vec<Complex64> {
    let n = u.len();
    let ut: Vec<Complex64> = u.iter().zip(a).map(|(x, ai)| x * ai).collect();
    let mut w: Vec<Complex64> = (0..n - 1)
        .map(|i| ut[i].ln() / k[i] - ut[n - 1].ln() / k[n - 1])
        .collect();
    w.push(ut.iter().sum());
    w
}

fn phi_general_c(u: &[Complex64], e: &EigenStructure) -> Vec<Complex64> {
    let n = u.len();
    let logu: Vec<Complex64> = u.iter().map(|x| x.ln()).collect();
    let mut w = Vec::with_capacity(n);
    for i in 0..e.kernel_dim() {
        w.push((0..n).map(|j| logu[j] * e.q[(i, j)]).sum());
    }
    for i in 0..e.rank {
        w.push((0..n).map(|j| u[j] * e.p[(i, j)]).sum());
    }
    w
}

fn complex_step_jacobian(u: &[f64], f: impl Fn(&[Complex64]) -> Vec<Complex64>) -> DMatrix<f64> {
    let n = u.len();
    let h = 1e-30;
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let z: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(u[i], if i == j { h } else { 0.0 }))
            .collect();
        let fz = f(&z);
        for i in 0..n {
            jac[(i, j)] = fz[i].im / h;
        }
    }
    jac
}

fn jacobian_oracle(spec: &SystemSpec, e: Option<&EigenStructure>, u: &[f64]) -> DMatrix<f64> {
    match &spec.kind {
        SystemKind::Rank1 { k, a } => complex_step_jacobian(u, |z| phi_rank1_c(z, k, a)),
        SystemKind::General { .. } => complex_step_jacobian(u, |z| phi_general_c(z, e.unwrap())),
    }
}

// ---- smooth periodic fields ----

fn smooth_field(r: &mut ChaCha8Rng, grid: &Grid, base: f64, amp: f64) -> Vec<f64> {
    let modes = 3usize;
    let mut terms = Vec::new();
    for mx in 0..=modes {
        let my_max = if grid.d == 2 { modes } else { 0 };
        for my in 0..=my_max {
            if mx == 0 && my == 0 {
                continue;
            }
            terms.push((mx as f64, my as f64, r.random_range(-1.0..1.0f64), r.random_range(-1.0..1.0f64)));
        }
    }
    let total: f64 = terms.iter().map(|t| t.2.abs() + t.3.abs()).sum();
    let scale = 2.0 * PI / grid.length;
    grid.sample(|x| {
        let y = if grid.d == 2 { x[1] } else { 0.0 };
        let s: f64 = terms
            .iter()
            .map(|(mx, my, c, s)| {
                let ph = scale * (mx * x[0] + my * y);
                c * ph.cos() + s * ph.sin()
            })
            .sum();
        base * (1.0 + amp * s / total)
    })
}

// ---- criteria ----

fn c1_round_trips() -> Outcome {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for &n in &[2usize, 3, 5] {
        for _ in 0..1000 {
            let spec = random_rank1(&mut r, n, 1);
            let u = random_u(&mut r, n);
            let w = phi_rank1(&PointU(u.clone()), &spec).unwrap();
            match psi_rank1(&w, &spec) {
                Ok(back) => worst = worst.max(rel_err(back.as_slice(), &u)),
                Err(_) => failures += 1,
            }
            let mut w2: Vec<f64> = (0..n - 1).map(|_| r.random_range(-2.0..2.0)).collect();
            w2.push(r.random_range(0.1..10.0));
            let pw = PointW::from_slice(&w2, n - 1, Variant::Rank1Explicit);
            match psi_rank1(&pw, &spec).and_then(|u| phi_rank1(&u, &spec)) {
                Ok(again) => worst = worst.max(rel_err(&again.to_vec(), &w2)),
                Err(_) => failures += 1,
            }
        }
    }
    for n in 2..=6usize {
        for rank in 1..=n {
            for _ in 0..1000 / n {
                let (_, e) = random_general(&mut r, n, rank, 1);
                let u = random_u(&mut r, n);
                let w = phi_general(&PointU(u.clone()), &e).unwrap();
                match psi_general(&w, &e) {
                    Ok(back) => worst = worst.max(rel_err(back.as_slice(), &u)),
                    Err(_) => failures += 1,
                }
                let u2 = DVector::from_vec(random_u(&mut r, n));
                let w_i: Vec<f64> = (0..n - rank).map(|_| r.random_range(-2.0..2.0)).collect();
                let w_ii: Vec<f64> = (&e.p * u2).iter().copied().collect();
                let pw = PointW::new(w_i, w_ii, Variant::GeneralEigen);
                match psi_general(&pw, &e).and_then(|u| phi_general(&u, &e)) {
                    Ok(again) => worst = worst.max(rel_err(&again.to_vec(), &pw.to_vec())),
                    Err(_) => failures += 1,
                }
            }
        }
    }
    for &n in &[2usize, 3, 5] {
        for _ in 0..1000 {
            let k = random_k(&mut r, n);
            let spec = SystemSpec::rank1(k.clone(), k, 1).unwrap();
            let u = random_u(&mut r, n);
            let w = phi_alt(&PointU(u.clone()), &spec).unwrap();
            match psi_alt(&w, &spec) {
                Ok(back) => worst = worst.max(rel_err(back.as_slice(), &u)),
                Err(_) => failures += 1,
            }
            let mut simplex: Vec<f64> = (0..n).map(|_| r.random_range(0.05..1.0)).collect();
            let total: f64 = simplex.iter().sum();
            simplex.iter_mut().for_each(|x| *x /= total);
            let pw = PointW::new(simplex[..n - 1].to_vec(), vec![r.random_range(0.1..10.0)], Variant::AppendixAlt);
            match psi_alt(&pw, &spec).and_then(|u| phi_alt(&u, &spec)) {
                Ok(again) => worst = worst.max(rel_err(&again.to_vec(), &pw.to_vec())),
                Err(_) => failures += 1,
            }
        }
    }
    check(
        failures == 0 && worst <= 1e-10,
        format!("max relative error {worst:.2e} (tol 1e-10), {failures} failed inversions"),
    )
}

fn c2_determinant() -> Outcome {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let n = 2 + i % 4;
        let spec = random_rank1(&mut r, n, 1);
        let u = random_u(&mut r, n);
        let (k, a) = (spec.k().unwrap(), spec.a().unwrap());
        let oracle = jacobian_oracle(&spec, None, &u).lu().determinant();
        let formula = det_formula_rank1(&u, k, a);
        let lib = jacobian_rank1(&PointU(u.clone()), &spec).unwrap();
        worst = worst
            .max((formula - oracle).abs() / oracle.abs())
            .max((lib.det_numeric - oracle).abs() / oracle.abs());
    }
    check(worst <= 1e-12, format!("max relative deviation {worst:.2e} (tol 1e-12)"))
}

fn asym(m: &DMatrix<f64>) -> f64 {
    let s = m.amax();
    if s == 0.0 {
        0.0
    } else {
        (m - m.transpose()).amax() / s
    }
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    ((m + m.transpose()) * 0.5).symmetric_eigenvalues().min()
}

fn c3_symmetrisers() -> Outcome {
    let mut r = rng(3);
    let mut worst_asym: f64 = 0.0;
    let mut min_eigenvalue = f64::INFINITY;
    for i in 0..1000 {
        let n = 2 + i % 4;
        let spec = random_rank1(&mut r, n, 2);
        let u = random_u(&mut r, n);
        let ut: Vec<f64> = u.iter().zip(spec.a().unwrap()).map(|(x, a)| x * a).collect();
        let grad = [r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)];
        let c = coeffs_rank1_at(&ut, spec.k().unwrap(), &grad).unwrap();
        for a1 in &c.a1 {
            worst_asym = worst_asym.max(asym(a1));
        }
        min_eigenvalue = min_eigenvalue.min(min_eig(&c.a0)).min(min_eig(&c.parab_coeff));
    }
    let mut r = rng(33);
    for i in 0..1000 {
        let n = 2 + i % 5;
        let rank = 1 + i % (n - 1).max(1);
        let (_, e) = random_general(&mut r, n, rank.min(n - 1), 2);
        let u = DVector::from_vec(random_u(&mut r, n));
        let grads: Vec<DVector<f64>> = (0..2).map(|_| DVector::from_fn(e.rank, |_, _| r.random_range(-3.0..3.0))).collect();
        let c = coeffs_general_at(&u, &e, &grads).unwrap();
        worst_asym = worst_asym.max(asym(&c.a0)).max(asym(&c.parab_coeff));
        for a1 in &c.a1 {
            worst_asym = worst_asym.max(asym(a1));
        }
        min_eigenvalue = min_eigenvalue.min(min_eig(&c.a0)).min(min_eig(&c.parab_coeff));
    }
    check(
        worst_asym <= 1e-12 && min_eigenvalue > 0.0,
        format!("max relative asymmetry {worst_asym:.2e} (tol 1e-12), min eigenvalue {min_eigenvalue:.2e} (> 0)"),
    )
}

fn push_forward_error(spec: &SystemSpec, e: Option<&EigenStructure>, grid: &Grid, u: &[Vec<f64>]) -> f64 {
    let ut = rhs_direct(grid, u, spec, DerivativeScheme::Spectral).unwrap();
    let w = field_to_w(spec, grid, u).unwrap();
    let wt = rhs_normal_form(grid, &w, spec, DerivativeScheme::Spectral, 0.0).unwrap();
    let n = spec.n;
    let mut worst: f64 = 0.0;
    for p in 0..grid.points() {
        let up: Vec<f64> = (0..n).map(|i| u[i][p]).collect();
        let jac = jacobian_oracle(spec, e, &up);
        let dudt = DVector::from_fn(n, |i, _| ut[i][p]);
        let pushed = jac * dudt;
        for i in 0..n {
            worst = worst.max((pushed[i] - wt[i][p]).abs());
        }
    }
    worst
}

fn c4_push_forward() -> Outcome {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for (d, n_grid) in [(1usize, 256usize), (2, 64)] {
        let grid = Grid::new(d, n_grid, 2.0 * PI).unwrap();
        for n in [2usize, 3] {
            let spec = random_rank1(&mut r, n, d);
            let u: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let base = r.random_range(0.5..2.0);
                    smooth_field(&mut r, &grid, base, 0.3)
                })
                .collect();
            worst = worst.max(push_forward_error(&spec, None, &grid, &u));
        }
        for (n, rank) in [(3usize, 1usize), (3, 2), (4, 2)] {
            let (spec, e) = random_general(&mut r, n, rank, d);
            let u: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let base = r.random_range(0.5..2.0);
                    smooth_field(&mut r, &grid, base, 0.3)
                })
                .collect();
            worst = worst.max(push_forward_error(&spec, Some(&e), &grid, &u));
        }
    }
    check(worst <= 1e-6, format!("max |DPhi rhs_direct - rhs_normal_form| {worst:.2e} (tol 1e-6)"))
}

fn c5_sensitivities() -> Outcome {
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    let opts = InversionOptions::default();
    for i in 0..200 {
        let n = 2 + i % 5;
        let rank = 1 + i % (n - 1).max(1);
        let (_, e) = random_general(&mut r, n, rank.min(n - 1), 1);
        let nk = e.kernel_dim();
        let u = random_u(&mut r, n);
        let w = phi_general(&PointU(u.clone()), &e).unwrap().to_vec();
        let s = sensitivity_at(&DVector::from_vec(u), &e).unwrap();
        let h = 1e-5;
        let mut fd_logu = DMatrix::zeros(n, n);
        let mut fd_x = DMatrix::zeros(e.rank, n);
        for m in 0..n {
            let eval = |sign: f64| {
                let mut wp = w.clone();
                wp[m] += sign * h;
                psi_general_with(&PointW::from_slice(&wp, nk, Variant::GeneralEigen), &e, None, &opts).unwrap()
            };
            let (plus, minus) = (eval(1.0), eval(-1.0));
            for j in 0..n {
                fd_logu[(j, m)] = (plus.u.0[j].ln() - minus.u.0[j].ln()) / (2.0 * h);
            }
            for j in 0..e.rank {
                fd_x[(j, m)] = (plus.x[j] - minus.x[j]) / (2.0 * h);
            }
        }
        let mut dx = DMatrix::zeros(e.rank, n);
        dx.view_mut((0, 0), (e.rank, nk)).copy_from(&s.dx_dw_kernel);
        dx.view_mut((0, nk), (e.rank, e.rank)).copy_from(&s.dx_dw_range);
        worst = worst
            .max((&fd_logu - &s.dlogu_dw).amax() / s.dlogu_dw.amax())
            .max((&fd_x - &dx).amax() / dx.amax());
    }
    check(worst <= 1e-5, format!("max relative deviation from central differences {worst:.2e} (tol 1e-5)"))
}

fn benchmark(n_grid: usize, amp: f64) -> (SystemSpec, FieldState) {
    let grid = Grid::new(1, n_grid, 2.0 * PI).unwrap();
    let spec = SystemSpec::rank1(vec![1.0, 2.0], vec![1.0, 1.0], 1).unwrap().with_domain_length(2.0 * PI);
    let u = vec![grid.sample(|x| 1.0 + amp * x[0].cos()), grid.sample(|x| 1.0 + amp * x[0].sin())];
    (spec, FieldState::new(grid, u, Space::U, 0.0).unwrap())
}

fn benchmark_config() -> SolverConfig {
    SolverConfig {
        t_end: 0.05,
        snapshots: 50,
        ..Default::default()
    }
}

fn c6_to_c8() -> [Outcome; 3] {
    let (spec, u0) = benchmark(256, 0.3);
    let report = run(&spec, &u0, &benchmark_config(), Mode::Both).unwrap();
    let direct = report.direct.as_ref().unwrap();
    let nf = report.normal_form.as_ref().unwrap();

    let first = &direct.series[0];
    let drift = direct
        .series
        .iter()
        .flat_map(|row| row.masses.iter().zip(&first.masses).map(|(m, m0)| (m - m0).abs()))
        .fold(0.0, f64::max);
    let total = |row: &crossdiff_core::solver::SeriesRow| row.masses.iter().sum::<f64>();
    let nf_drift = nf.series.iter().map(|row| (total(row) - total(&nf.series[0])).abs()).fold(0.0, f64::max);
    let min0 = u0.min();
    let min_t = direct
        .series
        .iter()
        .chain(&nf.series)
        .map(|row| row.min_density)
        .fold(f64::INFINITY, f64::min);
    let c6 = check(
        drift <= 1e-11 && nf_drift <= 1e-11 && min_t >= 0.4 * min0,
        format!(
            "per-species mass drift {drift:.2e}, normal-form total mass drift {nf_drift:.2e} (tol 1e-11); min u {min_t:.4} >= {:.4}",
            0.4 * min0
        ),
    );

    let w0 = &nf.state[0][1];
    let lo = w0.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = w0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let below = nf.parabolic.iter().map(|s| lo - s.min).fold(f64::NEG_INFINITY, f64::max);
    let above = nf.parabolic.iter().map(|s| s.max - hi).fold(f64::NEG_INFINITY, f64::max);
    let c7 = check(
        below <= 1e-8 && above <= 1e-8,
        format!(
            "w_n over {} steps: undershoot {below:.2e}, overshoot {above:.2e} (tol 1e-8)",
            nf.parabolic.len()
        ),
    );

    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    for traj in [direct, nf] {
        for (idx, kind) in [EntropyKind::Shannon, EntropyKind::Quadratic, EntropyKind::PLogP].iter().enumerate() {
            assert_eq!(EntropyKind::ALL[idx], *kind);
            let values: Vec<f64> = traj.series.iter().map(|r| r.entropies[idx].unwrap()).collect();
            let s = dissipation_series(&traj.times, &values, 1e-6);
            worst = worst.max(s.max_relative_increase);
            violations += s.violations.len();
        }
    }
    let c8 = check(
        violations == 0,
        format!("f1, f2, f3 on both solvers: largest relative increase {worst:.2e}, {violations} intervals above 1e-6(1+|F|)"),
    );
    [c6, c7, c8]
}

fn c9_cross_solver() -> Outcome {
    let mut dist = Vec::new();
    for n in [256, 512] {
        let (spec, u0) = benchmark(n, 0.3);
        let report = run(&spec, &u0, &benchmark_config(), Mode::Both).unwrap();
        dist.push(report.cross_distance.last().unwrap().distance);
    }
    let ratio = dist[0] / dist[1];
    check(
        dist[0] <= 1e-4 && (3.4..=4.6).contains(&ratio),
        format!("distance at T {:.2e} (tol 1e-4), N 256 -> 512 ratio {ratio:.3} (in [3.4, 4.6])", dist[0]),
    )
}

fn c10_picard() -> Outcome {
    let (spec, u0) = benchmark(128, 0.5);
    let cfg = SolverConfig {
        picard: PicardConfig {
            enabled: true,
            ..Default::default()
        },
        ..Default::default()
    };
    let out = run_picard(&spec, &u0, &cfg).unwrap();
    let t = &out.trace;
    let worst_ratio = t
        .records
        .iter()
        .filter(|r| r.iter >= 4)
        .filter_map(|r| r.ratio)
        .fold(0.0, f64::max);
    let max_hs = t.records.iter().map(|r| r.max_hs_norm).fold(0.0, f64::max);
    check(
        t.records.len() >= 5 && worst_ratio <= 0.6 && max_hs < t.bound(),
        format!(
            "{} iterates, max N^(l+1)/N^l for l >= 3 {worst_ratio:.3} (tol 0.6), max H^s {max_hs:.4} < KR {:.4}, T* {:.3e}",
            t.records.len(),
            t.bound(),
            t.horizon
        ),
    )
}

fn c11_equal_k() -> Outcome {
    let grid = Grid::new(1, 128, 2.0 * PI).unwrap();
    let cfg = SolverConfig {
        t_end: 0.05,
        dt: TimeStep::Fixed(2e-4),
        snapshots: 5,
        ..Default::default()
    };
    let spec = SystemSpec::rank1(vec![1.0, 1.0], vec![1.0, 1.0], 1).unwrap().with_domain_length(2.0 * PI);
    let scalar = SystemSpec::rank1(vec![1.0], vec![1.0], 1).unwrap().with_domain_length(2.0 * PI);
    let u1 = grid.sample(|x| 1.0 + 0.3 * x[0].cos());
    let u2 = grid.sample(|x| 1.0 + 0.3 * x[0].sin());
    let sum: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a + b).collect();

    let pair = run(&spec, &FieldState::new(grid, vec![u1.clone(), u2], Space::U, 0.0).unwrap(), &cfg, Mode::NormalForm).unwrap();
    let single = run(&scalar, &FieldState::new(grid, vec![sum], Space::U, 0.0).unwrap(), &cfg, Mode::NormalForm).unwrap();
    let (pair, single) = (pair.normal_form.unwrap(), single.normal_form.unwrap());
    let mut sum_err: f64 = 0.0;
    for (a, b) in pair.u.iter().zip(&single.u) {
        for p in 0..grid.points() {
            sum_err = sum_err.max((a[0][p] + a[1][p] - b[0][p]).abs());
        }
    }

    let sym = run(&spec, &FieldState::new(grid, vec![u1.clone(), u1], Space::U, 0.0).unwrap(), &cfg, Mode::NormalForm).unwrap();
    let sym_err = sym
        .normal_form
        .unwrap()
        .u
        .iter()
        .flat_map(|s| s[0].iter().zip(&s[1]).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    check(
        sum_err <= 1e-12 && sym_err <= 1e-10,
        format!("|u1 + u2 - U| {sum_err:.2e} (tol 1e-12), symmetric |u1 - u2| {sym_err:.2e} (tol 1e-10)"),
    )
}

fn c12_decoupling() -> Outcome {
    let mut r = rng(12);
    let grid = Grid::new(1, 128, 2.0 * PI).unwrap();
    let cfg = SolverConfig {
        t_end: 0.05,
        dt: TimeStep::Fixed(2e-4),
        snapshots: 5,
        ..Default::default()
    };
    let n = 3;
    let spec = SystemSpec::general(DMatrix::identity(n, n), 1).unwrap().with_domain_length(2.0 * PI);
    let scalar = SystemSpec::rank1(vec![1.0], vec![1.0], 1).unwrap().with_domain_length(2.0 * PI);
    let u: Vec<Vec<f64>> = (0..n).map(|_| smooth_field(&mut r, &grid, 1.0, 0.4)).collect();
    let coupled = run(&spec, &FieldState::new(grid, u.clone(), Space::U, 0.0).unwrap(), &cfg, Mode::Direct)
        .unwrap()
        .direct
        .unwrap();
    let mut worst: f64 = 0.0;
    for (i, ui) in u.into_iter().enumerate() {
        let alone = run(&scalar, &FieldState::new(grid, vec![ui], Space::U, 0.0).unwrap(), &cfg, Mode::Direct)
            .unwrap()
            .direct
            .unwrap();
        for (a, b) in coupled.u.iter().zip(&alone.u) {
            worst = worst.max(a[i].iter().zip(&b[0]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
    }
    check(worst <= 1e-12, format!("max deviation from scalar runs {worst:.2e} (tol 1e-12)"))
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut timed = |id: usize, name: &'static str, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        results.push((id, name, o, t.elapsed().as_secs_f64()));
    };
    timed(1, "transform round trips", &c1_round_trips);
    timed(2, "Jacobian determinant", &c2_determinant);
    timed(3, "symmetriser certification", &c3_symmetrisers);
    timed(4, "push-forward oracle", &c4_push_forward);
    timed(5, "sensitivity formulas", &c5_sensitivities);
    let t = Instant::now();
    let [c6, c7, c8] = c6_to_c8();
    let shared = t.elapsed().as_secs_f64();
    results.push((6, "conservation and positivity", c6, shared));
    results.push((7, "maximum principle", c7, shared));
    results.push((8, "entropy dissipation", c8, shared));
    let mut timed = |id: usize, name: &'static str, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        results.push((id, name, o, t.elapsed().as_secs_f64()));
    };
    timed(9, "cross-solver agreement", &c9_cross_solver);
    timed(10, "Picard contraction", &c10_picard);
    timed(11, "equal-k collapse", &c11_equal_k);
    timed(12, "decoupling oracle", &c12_decoupling);

    let mut failed = 0;
    for (id, name, o, secs) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("[{tag}] {id:>2} {name}: {} [{secs:.1}s]", o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
