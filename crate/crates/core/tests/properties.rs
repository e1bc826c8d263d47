use proptest::prelude::*;

use recession_lab::diagnostics::{distribution_function, touching_sets, Side, SubSquare};
use recession_lab::meshsolve::{GridSpec, ScalarField};
use recession_lab::operators::{evaluate, pucci_minus, pucci_plus, EllipticityPair, OperatorSpec};
use recession_lab::recession::mu_scale;
use recession_lab::symmat::{eigenvalues, eigenvalues_jacobi, SymMat};

/// Spacing 1/8 on [−1, 1] keeps every coordinate and lifted height dyadic.
fn grid() -> GridSpec {
    GridSpec::new(15, -1.0, 1.0, 4).unwrap()
}

/// Node values that are small multiples of 1/64 so that the shifts below stay exact.
fn dyadic_field() -> impl Strategy<Value = Vec<i32>> {
    prop::collection::vec(-64i32..=64, grid().len())
}

fn field(raw: &[i32]) -> ScalarField {
    let mut f = ScalarField::zeros(grid());
    for (v, r) in f.values.iter_mut().zip(raw) {
        *v = f64::from(*r) / 64.0;
    }
    f
}

fn sides() -> impl Strategy<Value = Side> {
    prop_oneof![Just(Side::Below), Just(Side::Above), Just(Side::Both)]
}

fn sym2() -> impl Strategy<Value = SymMat<f64>> {
    (-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0).prop_map(|(a, b, c)| SymMat::from_upper(2, vec![a, b, c]).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn touching_grows_with_the_opening(raw in dyadic_field(), side in sides(), k in 0u32..6) {
        let u = field(&raw);
        let q = SubSquare::whole(&u.grid);
        let m = 0.25 * f64::from(1u32 << k);
        let small = touching_sets(&u, m, side, q).unwrap();
        let large = touching_sets(&u, 2.0 * m, side, q).unwrap();
        prop_assert!(small.membership.iter().zip(&large.membership).all(|(a, b)| !a || *b));
        prop_assert!(large.measure <= small.measure);
    }

    #[test]
    fn affine_shifts_do_not_move_touching_sets(
        raw in dyadic_field(), side in sides(), a in -8i32..=8, b in -8i32..=8, c in -8i32..=8, k in 0u32..5
    ) {
        let u = field(&raw);
        let shifted = ScalarField::from_fn(u.grid, |x| f64::from(a) / 8.0 * x[0] + f64::from(b) / 8.0 * x[1] + f64::from(c) / 8.0);
        let mut v = u.clone();
        for (t, s) in v.values.iter_mut().zip(&shifted.values) {
            *t += s;
        }
        let q = SubSquare::whole(&u.grid);
        let m = f64::from(1u32 << k);
        prop_assert_eq!(
            touching_sets(&u, m, side, q).unwrap().membership,
            touching_sets(&v, m, side, q).unwrap().membership
        );
    }

    #[test]
    fn doubling_field_and_opening_together(raw in dyadic_field(), side in sides(), k in 0u32..5) {
        let u = field(&raw);
        let q = SubSquare::whole(&u.grid);
        let m = 0.5 * f64::from(1u32 << k);
        prop_assert_eq!(
            touching_sets(&u, m, side, q).unwrap().membership,
            touching_sets(&u.map(|v| 2.0 * v), 2.0 * m, side, q).unwrap().membership
        );
    }

    #[test]
    fn quarter_turn_rotates_masks(raw in dyadic_field(), side in sides(), k in 0u32..5) {
        let u = field(&raw);
        let r = u.rotate90();
        let q = SubSquare::whole(&u.grid);
        let m = f64::from(1u32 << k);
        let a = touching_sets(&u, m, side, q).unwrap();
        let b = touching_sets(&r, m, side, q).unwrap();
        let n = u.grid.n;
        for j in 1..=n {
            for i in 1..=n {
                // rotate90 maps old (j, N − i) to new (i, j), N = n + 1
                prop_assert_eq!(b.member(i, j), a.member(j, n + 1 - i));
            }
        }
    }

    #[test]
    fn distribution_is_nonincreasing(raw in dyadic_field(), mut ts in prop::collection::vec(0.01f64..1.0, 2..8)) {
        let g = field(&raw).map(f64::abs);
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ts.dedup();
        let c = distribution_function(&g, &ts).unwrap();
        prop_assert!(c.measures.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(c.measures.iter().all(|&m| m >= 0.0 && m <= c.domain_measure));
    }

    #[test]
    fn closed_form_agrees_with_jacobi(m in sym2()) {
        let a = eigenvalues(&m).unwrap();
        let b = eigenvalues_jacobi(&m).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + m.max_abs()));
        }
        prop_assert!((a.values.iter().sum::<f64>() - m.trace()).abs() <= 1e-12 * (1.0 + m.max_abs()));
    }

    #[test]
    fn scaled_operators_stay_between_the_extremals(
        m in sym2(), n in sym2(), w1 in 0.5f64..3.0, w2 in 0.5f64..3.0, log_mu in -4.0f64..1.0
    ) {
        for op in [
            OperatorSpec::perturbed_lagrangian(vec![w1, w2]).unwrap(),
            OperatorSpec::sine_perturbed(vec![w1, w2]).unwrap(),
        ] {
            let f = mu_scale(&op, 10f64.powf(log_mu)).unwrap();
            let pair: EllipticityPair<f64> = f.declared.pair().unwrap();
            let diff = evaluate(&f, None, &m).unwrap() - evaluate(&f, None, &n).unwrap();
            let d = m.sub(&n);
            prop_assert!(pucci_minus(&pair, &d).unwrap() - 1e-9 <= diff);
            prop_assert!(diff <= pucci_plus(&pair, &d).unwrap() + 1e-9);
        }
    }

    #[test]
    fn pucci_is_a_fixed_point_of_scaling(m in sym2(), log_mu in -6.0f64..2.0) {
        let p = OperatorSpec::pucci_plus(EllipticityPair::new(1.0, 2.0).unwrap());
        let f = mu_scale(&p, 10f64.powf(log_mu)).unwrap();
        let (a, b) = (evaluate(&f, None, &m).unwrap(), evaluate(&p, None, &m).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
}
