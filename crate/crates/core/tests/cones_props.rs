use proptest::prelude::*;

use sclab_core::cones::{Cone, TransactionCostSpec};

fn cone() -> impl Strategy<Value = Cone> {
    prop_oneof![
        (0.01f64..0.6).prop_map(|l| TransactionCostSpec::uniform(2, l).unwrap().cone().unwrap()),
        (0.01f64..0.3, 0.01f64..0.3).prop_map(|(a, b)| {
            TransactionCostSpec::new(vec![vec![0.0, a, b], vec![b, 0.0, a], vec![a, b, 0.0]])
                .unwrap()
                .cone()
                .unwrap()
        }),
    ]
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, d)
}

fn with_points() -> impl Strategy<Value = (Cone, Vec<f64>, Vec<f64>)> {
    cone().prop_flat_map(|k| {
        let d = k.dim();
        (Just(k), point(d), point(d))
    })
}

proptest! {
    #[test]
    fn cone_is_closed_under_addition_and_scaling((k, x, y) in with_points(), c in 0.0f64..5.0) {
        let tol = 1e-9;
        if k.contains(&x, tol).unwrap() && k.contains(&y, tol).unwrap() {
            let s: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            prop_assert!(k.contains(&s, 1e-8).unwrap());
            let sc: Vec<f64> = x.iter().map(|a| c * a).collect();
            prop_assert!(k.contains(&sc, 1e-8).unwrap());
        }
    }

    #[test]
    fn liquidation_is_superadditive_and_purchase_subadditive((k, x, y) in with_points()) {
        let s: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let l = |v: &[f64]| k.liquidation(v).unwrap();
        let p = |v: &[f64]| k.purchase(v).unwrap();
        prop_assert!(l(&s) >= l(&x) + l(&y) - 1e-9);
        prop_assert!(p(&s) <= p(&x) + p(&y) + 1e-9);
        prop_assert!(l(&x) <= p(&x) + 1e-9);
    }

    #[test]
    fn liquidation_is_cash_additive_and_signals_solvency((k, x, _) in with_points(), c in -2.0f64..2.0) {
        let mut shifted = x.clone();
        shifted[0] += c;
        prop_assert!((k.liquidation(&shifted).unwrap() - k.liquidation(&x).unwrap() - c).abs() <= 1e-9);
        let lx = k.liquidation(&x).unwrap();
        if lx.abs() > 1e-7 {
            prop_assert_eq!(k.contains(&x, 1e-9).unwrap(), lx > 0.0);
        }
        prop_assert!((k.liquidation_value(&x).unwrap() - lx).abs() <= 1e-8);
    }

    #[test]
    fn halfspace_membership_matches_lp_membership((k, x, _) in with_points()) {
        let margin = k.liquidation(&x).unwrap();
        if margin.abs() > 1e-7 {
            prop_assert_eq!(k.contains_dual(&x, 1e-9).unwrap(), k.contains(&x, 1e-9).unwrap());
        }
    }

    #[test]
    fn dual_generators_are_dual(k in cone()) {
        // Every dual generator is nonnegative on every generator.
        for y in k.dual_generators().unwrap() {
            for g in k.generators() {
                prop_assert!(y.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() >= -1e-12);
            }
        }
    }

    #[test]
    fn liquidation_is_positively_homogeneous_and_interior_margins_positive((k, x, _) in with_points(), c in 0.0f64..4.0) {
        let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
        prop_assert!((k.liquidation(&scaled).unwrap() - c * k.liquidation(&x).unwrap()).abs() <= 1e-9);
        let ones = vec![1.0; k.dim()];
        prop_assert!(k.epsilon_margin(&ones).unwrap() > 0.0);
        prop_assert!(k.dual_margin(&ones).unwrap() > 0.0);
        if k.contains(&x, 1e-9).unwrap() {
            prop_assert!(k.liquidation(&x).unwrap() >= -1e-9);
        }
    }
}
