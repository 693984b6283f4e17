use crossdiff_core::model::{canonical_relabel, SystemSpec};
use crossdiff_core::normal_form::{certify, coeffs_rank1_at};
use crossdiff_core::spectral_structure::{eigenstructure_default, verify_block_identities};
use crossdiff_core::transforms::{jacobian_rank1, phi_general, phi_rank1, psi_general, psi_rank1, PointU};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn densities(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, n).prop_map(|v| v.into_iter().map(f64::exp).collect())
}

fn rank1_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..6).prop_flat_map(|n| {
        (
            prop::collection::vec(0.2..5.0f64, n),
            prop::collection::vec(0.2..5.0f64, n),
            densities(n),
        )
    })
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn rank1_round_trip((k, a, u) in rank1_case()) {
        let spec = SystemSpec::rank1(k, a, 1).unwrap();
        let w = phi_rank1(&PointU(u.clone()), &spec).unwrap();
        let back = psi_rank1(&w, &spec).unwrap();
        prop_assert!(max_rel(back.as_slice(), &u) < 1e-10);
    }

    #[test]
    fn rank1_determinant_is_positive_and_matches((k, a, u) in rank1_case()) {
        let spec = SystemSpec::rank1(k, a, 1).unwrap();
        let j = jacobian_rank1(&PointU(u), &spec).unwrap();
        prop_assert!(j.det_formula > 0.0);
        prop_assert!((j.det_formula - j.det_numeric).abs() <= 1e-10 * j.det_formula.abs());
    }

    #[test]
    fn rank1_coefficients_certify((k, a, u) in rank1_case(), g in -3.0..3.0f64) {
        let spec = SystemSpec::rank1(k, a, 1).unwrap();
        let (spec, _) = canonical_relabel(&spec);
        let (k, a) = (spec.k().unwrap(), spec.a().unwrap());
        let gaps_ok = k.windows(2).all(|w| w[1] - w[0] > 1e-3);
        prop_assume!(gaps_ok);
        let ut: Vec<f64> = u.iter().zip(a).map(|(u, a)| u * a).collect();
        let c = coeffs_rank1_at(&ut, k, &[g]).unwrap();
        prop_assert!(certify(&c).passes(1e-12));
    }

    #[test]
    fn general_round_trip(
        cols in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 4), 1..4),
        u in densities(4),
    ) {
        let mut b = DMatrix::zeros(4, 4);
        for c in &cols {
            let c = DVector::from_column_slice(c);
            b += &c * c.transpose();
        }
        let Ok(e) = eigenstructure_default(&b) else { return Ok(()) };
        prop_assume!(e.lambda_range().iter().all(|l| *l > 1e-2));
        prop_assert!(verify_block_identities(&e).max() < 1e-12);
        let w = phi_general(&PointU(u.clone()), &e).unwrap();
        let back = psi_general(&w, &e).unwrap();
        prop_assert!(max_rel(back.as_slice(), &u) < 1e-9);
    }
}
