use bt_core::classic::nonreg_step;
use bt_core::model::{
    conjugate_linear, moma_to_ot, ot_objective, ot_to_moma, rescale, unweight, Matrix, MomaProblem,
    OtProblem, Sense, TransformSpec,
};
use bt_core::oracle::lp_oracle;
use bt_core::solver::{phi_eta_step, solve, AnnealingSchedule, SolveOptions};
use bt_core::verify::{hilbert_distance, verify_balanced};
use proptest::prelude::*;

fn positive_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.2f64..5.0, len)
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

prop_compose! {
    fn ot_problem(max_n: usize, max_m: usize)
        (n in 1..=max_n, m in 1..=max_m)
        (a in prop::collection::vec(-2.0f64..2.0, n * m),
         r in positive_vec(n), c in positive_vec(m), n in Just(n), m in Just(m))
        -> OtProblem {
        OtProblem::new(
            Matrix::from_shape_vec((n, m), a).unwrap(),
            normalized(&r),
            normalized(&c),
            Sense::Maximize,
        ).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hilbert_distance_is_a_projective_pseudometric(
        x in positive_vec(6), y in positive_vec(6), z in positive_vec(6), k in 0.1f64..10.0,
    ) {
        let dxy = hilbert_distance(&x, &y).unwrap();
        prop_assert!(dxy >= 0.0);
        prop_assert!((dxy - hilbert_distance(&y, &x).unwrap()).abs() <= 1e-12);
        let scaled: Vec<f64> = x.iter().map(|v| v * k).collect();
        prop_assert!(hilbert_distance(&x, &scaled).unwrap() <= 1e-12);
        let tri = hilbert_distance(&x, &z).unwrap() + hilbert_distance(&z, &y).unwrap();
        prop_assert!(dxy <= tri + 1e-12);
    }

    #[test]
    fn weak_duality_holds_for_oracle_duals(p in ot_problem(5, 5)) {
        // Any feasible plan is bounded by the dual value of optimal potentials.
        let sol = lp_oracle(&p).unwrap();
        let dual = sol.duals.value(&p.row_marginals, &p.col_marginals);
        let uniform = Matrix::from_shape_fn((p.n(), p.m()), |(i, j)| {
            p.row_marginals[i] * p.col_marginals[j]
        });
        prop_assert!(ot_objective(&p.weights, &uniform) <= dual + 1e-9);
        prop_assert!((sol.objective - dual).abs() <= 1e-9);
        let rep = verify_balanced(&p, &sol.plan.values, Some(&sol.duals)).unwrap();
        prop_assert!(rep.is_balanced, "{rep:?}");
    }

    #[test]
    fn solver_plan_objective_is_below_optimum(p in ot_problem(4, 4)) {
        let out = solve(&p, &AnnealingSchedule::single(0.05, 1e-9).unwrap(), &SolveOptions::default())
            .unwrap();
        let opt = lp_oracle(&p).unwrap().objective;
        prop_assert!(ot_objective(&p.weights, &out.plan.values) <= opt + 1e-9);
    }

    #[test]
    fn additive_multiplicative_round_trip(p in ot_problem(4, 6)) {
        let back = moma_to_ot(&ot_to_moma(&p).unwrap()).unwrap();
        for (a, b) in p.weights.iter().zip(back.weights.iter()) {
            prop_assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn conjugation_is_an_involution(p in ot_problem(4, 4)) {
        let q = ot_to_moma(&p).unwrap();
        let twice = conjugate_linear(&conjugate_linear(&q).unwrap()).unwrap();
        prop_assert_eq!(twice.sense, q.sense);
        for (a, b) in q.coefficients.iter().zip(twice.coefficients.iter()) {
            prop_assert!((a - b).abs() <= 1e-14 * a);
        }
    }

    #[test]
    fn unweight_round_trips_plans(
        p in ot_problem(4, 4), w in positive_vec(8), s in 0.1f64..10.0,
    ) {
        let q = ot_to_moma(&p).unwrap();
        let spec = TransformSpec {
            row_weights: w[..p.n()].to_vec(),
            col_weights: w[4..4 + p.m()].to_vec(),
            scale: s,
        };
        let t = unweight(&q, &spec).unwrap();
        for (k, rt) in t.row_marginals.iter().enumerate() {
            prop_assert!((rt - q.row_marginals[k] * spec.row_weights[k]).abs() <= 1e-15);
        }
        let x = Matrix::from_shape_fn((p.n(), p.m()), |(i, j)| (i + 2 * j + 1) as f64);
        let y = spec.backward_plan(&spec.forward_plan(&x));
        for (a, b) in x.iter().zip(y.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }
    }

    #[test]
    fn rescale_shifts_the_optimum_predictably(p in ot_problem(4, 4), s in 0.25f64..4.0) {
        let base = lp_oracle(&p).unwrap();
        let scaled = moma_to_ot(&rescale(&ot_to_moma(&p).unwrap(), s).unwrap()).unwrap();
        let sol = lp_oracle(&scaled).unwrap();
        // a' = a + ln s on a plan of mass 1/s.
        prop_assert!((sol.objective - (base.objective + s.ln()) / s).abs() <= 1e-9);
    }

    #[test]
    fn weight_map_is_homogeneous_and_monotone(
        b in prop::collection::vec(0.5f64..2.0, 12),
        alpha in positive_vec(3), theta in 0.1f64..10.0, bump in 1.01f64..2.0,
        r in positive_vec(3), c in positive_vec(4),
    ) {
        let p = MomaProblem::new(
            Matrix::from_shape_vec((3, 4), b).unwrap(),
            normalized(&r),
            normalized(&c),
            Sense::Maximize,
        ).unwrap();
        let eta = 0.5;
        let (h, _) = phi_eta_step(&alpha, &p, eta).unwrap();
        let scaled: Vec<f64> = alpha.iter().map(|a| a * theta).collect();
        let (hs, _) = phi_eta_step(&scaled, &p, eta).unwrap();
        for (x, y) in h.iter().zip(&hs) {
            prop_assert!((theta * x - y).abs() <= 1e-12 * y);
        }
        let mut bigger = alpha.clone();
        bigger[0] *= bump;
        let (hb, _) = phi_eta_step(&bigger, &p, eta).unwrap();
        prop_assert!(hb.iter().zip(&h).all(|(a, b)| a > b));
    }

    #[test]
    fn nonreg_step_is_idempotent(
        logs in prop::collection::vec(-5.0f64..5.0, 20), alpha in positive_vec(4),
    ) {
        let b = Matrix::from_shape_vec((4, 5), logs).unwrap().mapv(f64::exp);
        let (a1, _) = nonreg_step(&alpha, &b).unwrap();
        let (a2, _) = nonreg_step(&a1, &b).unwrap();
        prop_assert_eq!(a1, a2);
    }
}
