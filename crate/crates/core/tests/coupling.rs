use hyperpara::coupling::{
    compute_bounds_report, lipschitz_in_data_experiment, picard_window, positivity_audit, solve_coupled,
    solve_model, CoupledTrace, InitialIterate, Model, Scenario, Target,
};
use hyperpara::error::CouplingError;
use hyperpara::{parse, DomainSpec, SlotKind};

fn predator_prey(cells: usize) -> Scenario {
    Scenario::from_sources(
        DomainSpec::interval(0.0, 1.0).unwrap(),
        vec![cells],
        ["1-w", "-u", "0.1", "0.1", "exp(-50*(x-0.3)^2)", "sin(pi*x)"],
    )
    .unwrap()
}

fn sup_distance(a: &CoupledTrace, b: &CoupledTrace) -> f64 {
    assert_eq!(a.times, b.times);
    (0..a.times.len())
        .map(|k| a.u[k].sub(&b.u[k]).l1() + a.w[k].sub(&b.w[k]).l1())
        .fold(0.0, f64::max)
}

#[test]
fn windows_tile_the_horizon_and_stitch_exactly() {
    let s = predator_prey(96);
    let model = Model::new(&s).unwrap();
    let tr = solve_model(&model, &s.picard).unwrap();
    let accepted: Vec<_> = tr.accepted_windows().cloned().collect();
    assert_eq!(accepted.first().unwrap().t0, 0.0);
    assert!((accepted.last().unwrap().t1 - s.t_end).abs() < 1e-12);
    for pair in accepted.windows(2) {
        assert_eq!(pair[0].t1, pair[1].t0);
    }
    assert_eq!(tr.times.len(), model.n_steps + 1);

    // recomputing the second window from the stored joint state reproduces it
    let joint = ((accepted[0].t1 / model.dt).round()) as usize;
    let steps = ((accepted[1].t1 - accepted[1].t0) / model.dt).round() as usize;
    let sol = picard_window(&model, joint, steps, &tr.u[joint], &tr.w[joint], &s.picard).unwrap();
    for k in 0..=steps {
        assert_eq!(sol.u[k], tr.u[joint + k]);
        assert_eq!(sol.w[k], tr.w[joint + k]);
    }
}

#[test]
fn solution_does_not_depend_on_the_initial_iterate() {
    let mut s = predator_prey(96);
    let datum = solve_coupled(&s).unwrap();
    s.picard.initial = InitialIterate::Zero;
    let zero = solve_coupled(&s).unwrap();
    assert!(sup_distance(&datum, &zero) <= 2.0 * s.picard.tol);
}

#[test]
fn solves_are_bitwise_deterministic() {
    let s = predator_prey(64);
    let (a, b) = (solve_coupled(&s).unwrap(), solve_coupled(&s).unwrap());
    assert_eq!(a.u, b.u);
    assert_eq!(a.w, b.w);
    assert_eq!(a.windows, b.windows);
}

#[test]
fn ledger_holds_on_regression_scenarios() {
    let mut cases = vec![predator_prey(128)];

    let mut repulsive = predator_prey(128);
    repulsive.attract = -1.0;
    cases.push(repulsive);

    let mut crank = predator_prey(128);
    crank.parabolic_scheme = hyperpara::parabolic::ParabolicScheme::CrankNicolson;
    crank.beta = parse("-u + 0.5*cos(2*pi*x)", SlotKind::Beta).unwrap();
    cases.push(crank);

    let mut planar = Scenario::from_sources(
        DomainSpec::rectangle((0.0, 1.0), (0.0, 1.0)).unwrap(),
        vec![32, 32],
        ["1-w", "-u", "0.05", "0.1*x*y", "exp(-40*((x-0.3)^2+(y-0.4)^2))", "sin(pi*x)*sin(pi*y)"],
    )
    .unwrap();
    planar.t_end = 0.2;
    planar.dt = 0.005;
    cases.push(planar);

    for (i, s) in cases.iter().enumerate() {
        let tr = solve_coupled(s).unwrap();
        let report = compute_bounds_report(&tr, s).unwrap();
        for check in &report.inequalities {
            assert!(check.pass, "case {i}: {} ratio {}", check.name, check.max_ratio);
        }
        assert!(report.flags.is_empty(), "case {i}: {:?}", report.flags);
        let pos = positivity_audit(&tr);
        assert!(pos.pass, "case {i}: {pos:?}");
    }
}

#[test]
fn lipschitz_quotients_in_u0_stay_bounded() {
    let s = predator_prey(128);
    let r = lipschitz_in_data_experiment(&s, Target::U0, &[1e-2, 5e-3]).unwrap();
    let (lo, hi) = (r.ratio_min.unwrap(), r.ratio_max.unwrap());
    assert!(lo >= 0.7 && hi <= 1.4, "[{lo}, {hi}]");
}

#[test]
fn experiments_reject_the_wrong_target_kind() {
    let s = predator_prey(64);
    assert!(lipschitz_in_data_experiment(&s, Target::A, &[1e-2]).is_err());
    assert!(hyperpara::coupling::stability_in_controls_experiment(&s, Target::W0, &[1e-2]).is_err());
}

#[test]
fn failed_windows_are_halved_then_collapse() {
    let mut s = predator_prey(64);
    s.picard.max_iter = 4;
    let tr = solve_coupled(&s).unwrap();
    let rejected = tr.windows.iter().filter(|w| !w.accepted).count();
    assert!(rejected > 0);
    for w in tr.windows.iter().filter(|w| !w.accepted) {
        assert_eq!(w.diffs.len(), 4);
    }
    assert!((tr.times.last().unwrap() - s.t_end).abs() < 1e-12);

    s.picard.max_iter = 1;
    assert!(matches!(solve_coupled(&s), Err(CouplingError::WindowCollapse { .. })));
}
