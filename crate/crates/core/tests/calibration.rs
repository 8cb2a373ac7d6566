//! Recomputes the TV constants on the frozen seed suites and checks the
//! stored values still dominate.

use hyperpara::calibration::{HYPERBOLIC_TV_CONSTANT, PARABOLIC_TV_CONSTANT, SUITE_SEED, SUITE_SIZE};
use hyperpara::hyperbolic::{check_hyperbolic_bounds_with, solve_hyperbolic, stability_in_c_with};
use hyperpara::parabolic::{check_parabolic_bounds_with, solve_parabolic, ParabolicScheme};
use hyperpara::suite::{hyperbolic_suite, parabolic_suite, velocity_pair_suite};

#[test]
fn stored_constants_dominate_suite_quotients() {
    let mut par: f64 = 0.0;
    for case in parabolic_suite(SUITE_SEED, SUITE_SIZE) {
        for scheme in [ParabolicScheme::ImplicitEuler, ParabolicScheme::CrankNicolson] {
            let tr = solve_parabolic(&case.problem, case.t_end, scheme, case.dt).unwrap();
            par = par.max(check_parabolic_bounds_with(&tr, &case.problem, 0.0).tv_required_constant);
        }
    }
    let mut hyp: f64 = 0.0;
    for case in hyperbolic_suite(SUITE_SEED, SUITE_SIZE) {
        let tr = solve_hyperbolic(&case.problem, case.t_end, case.dt).unwrap();
        hyp = hyp.max(check_hyperbolic_bounds_with(&tr, &case.problem, 0.0).tv_required_constant);
    }
    for (p1, p2, t_end, dt) in velocity_pair_suite(SUITE_SEED, SUITE_SIZE) {
        let s = stability_in_c_with(&p1, &p2, t_end, dt, 0.0).unwrap();
        hyp = hyp.max(s.required_constant);
    }
    println!("parabolic quotient {par:.6e} -> {:.6e}", (2.0 * par).max(1.0));
    println!("hyperbolic quotient {hyp:.6e} -> {:.6e}", (2.0 * hyp).max(1.0));
    assert!(par <= PARABOLIC_TV_CONSTANT, "parabolic quotient {par} exceeds {PARABOLIC_TV_CONSTANT}");
    assert!(hyp <= HYPERBOLIC_TV_CONSTANT, "hyperbolic quotient {hyp} exceeds {HYPERBOLIC_TV_CONSTANT}");
}
