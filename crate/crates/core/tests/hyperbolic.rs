use std::sync::Arc;

use hyperpara::calibration::SUITE_SEED;
use hyperpara::hyperbolic::{
    check_hyperbolic_bounds, characteristics_trace, eval_characteristics_solution, solve_hyperbolic,
    stability_in_a, stability_in_c, time_lipschitz_check, weak_residual_hyperbolic, Branch,
    TransportProblem,
};
use hyperpara::source::{Constant, ConstantVector, FnScalar};
use hyperpara::suite::{hyperbolic_suite, reaction_pair_suite, velocity_pair_suite};
use hyperpara::weak::standard_test_functions;
use hyperpara::{Field, Grid, Point};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bump(x: f64) -> f64 {
    if x > 0.1 && x < 0.5 {
        (std::f64::consts::PI * (x - 0.1) / 0.4).sin().powi(2)
    } else {
        0.0
    }
}

fn translation(n: usize, speed: f64) -> TransportProblem {
    let g = Grid::interval(0.0, 1.0, n).unwrap();
    TransportProblem::new(Field::from_fn(&g, |p| bump(p[0])).unwrap())
        .with_velocity(Arc::new(ConstantVector {
            value: [speed, 0.0],
            dim: 1,
        }))
        .with_initial(Arc::new(FnScalar(|_t, p: Point| bump(p[0]))))
}

#[test]
fn l1_linf_bounds_and_positivity_on_suite() {
    for (i, case) in hyperbolic_suite(SUITE_SEED + 1, 12).into_iter().enumerate() {
        let tr = solve_hyperbolic(&case.problem, case.t_end, case.dt).unwrap();
        let b = check_hyperbolic_bounds(&tr, &case.problem);
        assert!(b.l1.holds(1e-9), "case {i}: l1 ratio {}", b.l1.max_ratio());
        assert!(b.linf.holds(1e-9), "case {i}: linf ratio {}", b.linf.max_ratio());
        assert!(b.tv.holds(1e-9), "case {i}: tv ratio {}", b.tv.max_ratio());
        assert!(b.min_value >= -1e-12, "case {i}: min {}", b.min_value);
    }
}

#[test]
fn reaction_stability_on_random_pairs() {
    for (i, (p1, p2, t_end, dt)) in reaction_pair_suite(SUITE_SEED + 2, 8).into_iter().enumerate() {
        let s = stability_in_a(&p1, &p2, t_end, dt).unwrap();
        assert!(s.holds(1e-9), "pair {i}: ratio {}", s.max_ratio());
    }
}

#[test]
fn velocity_stability_on_random_pairs() {
    for (i, (p1, p2, t_end, dt)) in velocity_pair_suite(SUITE_SEED + 3, 8).into_iter().enumerate() {
        let s = stability_in_c(&p1, &p2, t_end, dt).unwrap();
        assert!(s.series.holds(1e-9), "pair {i}: ratio {}", s.series.max_ratio());
    }
}

#[test]
fn velocity_stability_is_first_order_in_the_shift() {
    let p1 = translation(128, 0.5);
    let quotient = |eps: f64| {
        let p2 = translation(128, 0.5 + eps);
        let s = stability_in_c(&p1, &p2, 0.4, 0.005).unwrap();
        assert!(s.series.holds(1e-9));
        s.series.entries.last().unwrap().lhs / eps
    };
    let (q1, q2) = (quotient(0.04), quotient(0.02));
    assert!(q1 > 0.0 && (q2 / q1 - 1.0).abs() < 0.3, "{q1} {q2}");
    let same = stability_in_c(&p1, &p1, 0.4, 0.005).unwrap();
    assert!(same.series.entries.iter().all(|e| e.lhs == 0.0));
}

#[test]
fn oracle_branches_partition_queries() {
    let g = Grid::rectangle((0.0, 1.0), (0.0, 1.0), (8, 8)).unwrap();
    let p = TransportProblem::new(Field::constant(&g, 1.0)).with_velocity(Arc::new(
        hyperpara::source::FnVector::new(2, |t: f64, q: Point| {
            [0.8 * (3.0 * q[1] + t).sin(), 0.6 * (2.0 * q[0]).cos()]
        }),
    ));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut interior, mut boundary) = (0, 0);
    for _ in 0..10_000 {
        let t = rng.random_range(0.01..1.0);
        let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let v = hyperpara::hyperbolic::eval_characteristics_solution_with(&p, t, x, t / 16.0);
        match v.branch {
            Branch::Interior => {
                interior += 1;
                assert!(v.value > 0.0);
            }
            Branch::Boundary { entry_time } => {
                boundary += 1;
                assert!(entry_time > 0.0 && entry_time <= t);
                assert_eq!(v.value, 0.0);
            }
        }
    }
    assert_eq!(interior + boundary, 10_000);
    assert!(interior > 0 && boundary > 0);
}

#[test]
fn time_lipschitz_modulus_matches_translation_estimate() {
    let p = translation(256, 1.0);
    let dx = p.grid().dx()[0];
    let m1 = time_lipschitz_check(&solve_hyperbolic(&p, 0.3, 0.8 * dx).unwrap());
    let m2 = time_lipschitz_check(&solve_hyperbolic(&p, 0.3, 0.4 * dx).unwrap());
    let estimate = p.u0.tv();
    assert!(m1 > 0.3 * estimate && m1 < 1.5 * estimate, "{m1} vs {estimate}");
    assert!((0.5..=2.0).contains(&(m2 / m1)));
}

#[test]
fn weak_residuals_of_oracle_and_fv() {
    let tests = standard_test_functions(1, 5, 0.3);
    let p = translation(256, 1.0);
    let times: Vec<f64> = (0..=60).map(|k| 0.005 * k as f64).collect();
    let oracle = characteristics_trace(&p, &times);
    let r = weak_residual_hyperbolic(&oracle, &p, &tests);
    assert!(r.iter().all(|v| v.abs() <= 1e-4), "{r:?}");

    let res = |n: usize| {
        let p = translation(n, 1.0);
        let tr = solve_hyperbolic(&p, 0.3, 0.3 / (n as f64 / 0.8).ceil()).unwrap();
        weak_residual_hyperbolic(&tr, &p, &tests)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    };
    let (coarse, fine) = (res(64), res(128));
    assert!(coarse / fine >= 1.5, "{coarse} {fine}");
}

#[test]
fn oracle_is_exact_for_constant_coefficients() {
    let lam = -0.6;
    let p = translation(64, 0.7)
        .with_reaction(Arc::new(Constant(lam)))
        .with_source(Arc::new(Constant(0.3)));
    for x in [0.05, 0.2, 0.33, 0.5, 0.77, 0.95] {
        let t = 0.6;
        let v = eval_characteristics_solution(&p, t, [x, 0.0]);
        let s0 = (t - x / 0.7).max(0.0);
        let src = 0.3 * ((lam * (t - s0)).exp() - 1.0) / lam;
        let exact = if s0 > 0.0 {
            src
        } else {
            bump(x - 0.7 * t) * (lam * t).exp() + src
        };
        assert!((v.value - exact).abs() < 1e-8, "x = {x}: {} vs {exact}", v.value);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn oracle_positive_for_nonnegative_data(
        t in 0.01f64..1.0,
        x in 0.0f64..1.0,
        amp in 0.0f64..2.0,
        lam in -2.0f64..2.0,
    ) {
        let p = translation(32, 0.9)
            .with_reaction(Arc::new(FnScalar(move |s: f64, q: Point| lam * (3.0 * q[0] + s).cos())))
            .with_source(Arc::new(FnScalar(move |_s, q: Point| amp * q[0] * q[0])));
        let v = eval_characteristics_solution(&p, t, [x, 0.0]);
        prop_assert!(v.value >= 0.0);
    }

    #[test]
    fn fv_minimum_is_nonnegative(seed in 0u64..1000) {
        let case = hyperbolic_suite(seed, 1).remove(0);
        let tr = solve_hyperbolic(&case.problem, 0.1, case.dt).unwrap();
        prop_assert!(tr.min_value() >= -1e-12);
    }
}
