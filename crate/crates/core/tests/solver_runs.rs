use std::f64::consts::PI;

use nalgebra::DMatrix;
use crossdiff_core::grid::{FieldState, Grid, Space};
use crossdiff_core::model::SystemSpec;
use crossdiff_core::solver::{
    field_to_w, picard_stage, run, run_picard, Mode, PicardConfig, Rank1Operator, Scheme, SolverConfig, SolverError,
};

fn grid(n: usize) -> Grid {
    Grid::new(1, n, 2.0 * PI).unwrap()
}

fn field(g: &Grid, comps: Vec<Vec<f64>>) -> FieldState {
    FieldState::new(*g, comps, Space::U, 0.0).unwrap()
}

fn short(t_end: f64) -> SolverConfig {
    SolverConfig {
        t_end,
        snapshots: 4,
        ..Default::default()
    }
}

fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn species_order_does_not_matter() {
    let g = grid(64);
    let u1 = g.sample(|x| 1.0 + 0.3 * x[0].cos());
    let u2 = g.sample(|x| 1.0 + 0.2 * (2.0 * x[0]).sin());
    let sorted = SystemSpec::rank1(vec![1.0, 2.0], vec![1.0, 0.5], 1).unwrap();
    let swapped = SystemSpec::rank1(vec![2.0, 1.0], vec![0.5, 1.0], 1).unwrap();
    let a = run(&sorted, &field(&g, vec![u1.clone(), u2.clone()]), &short(0.02), Mode::Both).unwrap();
    let b = run(&swapped, &field(&g, vec![u2, u1]), &short(0.02), Mode::Both).unwrap();
    assert_eq!(b.permutation, vec![1, 0]);
    for (x, y) in [(&a.direct, &b.direct), (&a.normal_form, &b.normal_form)] {
        let (x, y) = (x.as_ref().unwrap().final_u(), y.as_ref().unwrap().final_u());
        assert!(max_diff(&[x[0].clone(), x[1].clone()], &[y[1].clone(), y[0].clone()]) < 1e-13);
    }
}

#[test]
fn imex_tracks_explicit_run() {
    let g = grid(128);
    let spec = SystemSpec::rank1(vec![1.0, 2.0], vec![1.0, 1.0], 1).unwrap();
    let u0 = field(&g, vec![g.sample(|x| 1.0 + 0.3 * x[0].cos()), g.sample(|x| 1.0 + 0.3 * x[0].sin())]);
    let explicit = run(&spec, &u0, &short(0.05), Mode::NormalForm).unwrap().normal_form.unwrap();
    let cfg = SolverConfig {
        scheme: Scheme::Imex,
        ..short(0.05)
    };
    let imex = run(&spec, &u0, &cfg, Mode::NormalForm).unwrap().normal_form.unwrap();
    assert!(imex.steps < explicit.steps);
    assert!(max_diff(imex.final_u(), explicit.final_u()) < 5e-3);
    let total = |t: &crossdiff_core::solver::Trajectory, i: usize| t.series[i].masses.iter().sum::<f64>();
    assert!((total(&imex, 0) - total(&imex, imex.series.len() - 1)).abs() < 1e-10);
}

#[test]
fn general_rank_two_solvers_agree() {
    let g = grid(64);
    let b = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 0.5]);
    let b = &b * b.transpose();
    let b = {
        // project out one direction to make the matrix rank-deficient
        let v = nalgebra::DVector::from_vec(vec![1.0, -1.0, 1.0]).normalize();
        let proj = DMatrix::identity(3, 3) - &v * v.transpose();
        &proj * b * &proj
    };
    let spec = SystemSpec::general(b, 1).unwrap();
    assert_eq!(spec.rank, 2);
    let u0 = field(
        &g,
        vec![
            g.sample(|x| 1.0 + 0.2 * x[0].cos()),
            g.sample(|x| 1.2 + 0.2 * x[0].sin()),
            g.sample(|x| 0.8 + 0.1 * (2.0 * x[0]).cos()),
        ],
    );
    let report = run(&spec, &u0, &short(0.01), Mode::Both).unwrap();
    assert!(report.max_cross_distance().unwrap() < 1e-3, "{:?}", report.cross_distance);
}

#[test]
fn three_species_with_equal_tail_conserves_each_mass() {
    let g = grid(64);
    let spec = SystemSpec::rank1(vec![1.0, 2.0, 2.0], vec![1.0, 1.0, 0.5], 1).unwrap();
    let u0 = field(
        &g,
        vec![
            g.sample(|x| 1.0 + 0.3 * x[0].cos()),
            g.sample(|x| 1.0 + 0.3 * x[0].sin()),
            g.sample(|x| 0.7 + 0.2 * (2.0 * x[0]).cos()),
        ],
    );
    let report = run(&spec, &u0, &short(0.02), Mode::Both).unwrap();
    let nf = report.normal_form.as_ref().unwrap();
    let (first, last) = (&nf.series[0].masses, &nf.series.last().unwrap().masses);
    for i in 1..3 {
        assert!((first[i] - last[i]).abs() < 1e-11, "species {i}");
    }
    assert!(report.max_cross_distance().unwrap() < 1e-3);
}

#[test]
fn picard_stage_obeys_maximum_principle() {
    let g = grid(64);
    let spec = SystemSpec::rank1(vec![1.0, 2.0], vec![1.0, 1.0], 1).unwrap();
    let mut op = Rank1Operator::new(&spec, g, Default::default(), 0.01).unwrap();
    let v0 = field_to_w(&spec, &g, &[g.sample(|x| 1.0 + 0.4 * x[0].cos()), g.sample(|x| 1.0 + 0.4 * x[0].sin())]).unwrap();
    let v: Vec<Vec<Vec<f64>>> = (0..=20)
        .map(|j| {
            let s = 1.0 + 0.01 * j as f64;
            v0.iter().map(|c| c.iter().map(|x| x * s).collect()).collect()
        })
        .collect();
    let z = field_to_w(&spec, &g, &[g.sample(|x| 1.5 + 0.5 * (3.0 * x[0]).sin()), g.sample(|x| 1.0 + 0.6 * x[0].cos())]).unwrap();
    let (lo, hi) = z[1].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let out = picard_stage(&mut op, &v, &z, 2e-4).unwrap();
    for w in &out {
        for &x in &w[1] {
            assert!(x >= lo - 1e-10 && x <= hi + 1e-10);
        }
    }
}

#[test]
fn oversized_picard_horizon_is_halved() {
    let g = grid(128);
    let spec = SystemSpec::rank1(vec![1.0, 2.0], vec![1.0, 1.0], 1).unwrap();
    let u0 = field(&g, vec![g.sample(|x| 1.0 + 0.5 * x[0].cos()), g.sample(|x| 1.0 + 0.5 * x[0].sin())]);
    let cfg = SolverConfig {
        picard: PicardConfig {
            enabled: true,
            stage_horizon: Some(4.0),
            ..Default::default()
        },
        ..Default::default()
    };
    let out = run_picard(&spec, &u0, &cfg).unwrap();
    assert!(out.trace.restarts >= 1);
    assert!(out.trace.horizon < 4.0);
    let recs = &out.trace.records;
    assert!(recs.last().unwrap().n_ell < 1e-4 * recs[0].n_ell);
}

#[test]
fn positivity_floor_is_enforced() {
    let g = grid(32);
    let spec = SystemSpec::rank1(vec![1.0], vec![1.0], 1).unwrap();
    let u0 = field(&g, vec![g.sample(|x| 1.0 + 0.5 * x[0].cos())]);
    let cfg = SolverConfig {
        positivity_floor: 0.6,
        ..short(0.01)
    };
    assert!(matches!(
        run(&spec, &u0, &cfg, Mode::Direct),
        Err(SolverError::PositivityLost { time, .. }) if time == 0.0
    ));
}
