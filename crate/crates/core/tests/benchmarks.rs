use tsa::feedback::{constant_sequence, evaluate_cost};
use tsa::problems::{
    benchmark, driven_cycle_limit, heat_semidiscretization, make_driven_oscillator, HeatProfile, REGISTRY,
};
use tsa::{run_benchmark, ExplicitEuler, ImplicitEuler, PruneScope, Stepper, TimeGrid};

#[test]
fn heat_operator_is_negative_definite() {
    for d in [2, 10, 50] {
        let h = heat_semidiscretization(d, 0.1, HeatProfile::Smooth).unwrap();
        let a = h.problem.linear_dynamics().unwrap().operator().to_dense();
        let eig = a.symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|&l| l < 0.0), "d = {d}: {eig}");
    }
}

#[test]
fn uncontrolled_heat_decays() {
    let h = heat_semidiscretization(100, 0.1, HeatProfile::Indicator).unwrap();
    let s = ImplicitEuler::for_problem(&h.problem, 0.05).unwrap();
    let norm = h.problem.norm();
    let mut y = h.x0.clone();
    let mut last = norm.norm(&y);
    for n in 0..20 {
        y = s.step(&y, &[0.0], 0.05 * n as f64).unwrap();
        let now = norm.norm(&y);
        assert!(now < last, "step {n}: {now} >= {last}");
        last = now;
    }
}

#[test]
fn uncontrolled_driven_oscillator_settles_on_the_cycle() {
    let p = make_driven_oscillator();
    let grid = TimeGrid::with_step(0.0, 20.0, 0.001).unwrap();
    let s = ExplicitEuler::new(&p, grid.dt());
    let run = evaluate_cost(&p, &grid, &[-0.5, 0.5], &constant_sequence(&[0.0], &grid), &s).unwrap();
    let dist = |n: usize| {
        let c = driven_cycle_limit(grid.time(n));
        let x = &run.states[n];
        ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt()
    };
    let early = dist(0);
    let late = dist(grid.steps());
    assert!(late < 0.01 && late < early / 50.0, "{early} -> {late}");
}

#[test]
fn registry_builds_every_benchmark() {
    for name in REGISTRY {
        let b = benchmark(name, Some(8)).unwrap();
        assert_eq!(b.x0.len(), b.problem.dim(), "{name}");
        assert_eq!(b.controls.dim(), b.problem.control_dim(), "{name}");
        if b.scope == PruneScope::Tree {
            assert!(b.problem.is_autonomous(), "{name}");
        }
        b.stepper().unwrap();
    }
    assert!(benchmark("nope", None).is_err());
}

#[test]
fn vdp2_feedback_beats_doing_nothing() {
    let b = benchmark("vdp2", None).unwrap();
    let s = run_benchmark(&b, &b.prune_config()).unwrap();
    assert!(s.controlled.total < s.uncontrolled.total);
    assert!((s.controlled.total - s.values.root_value()).abs() < 1e-10);
}

#[test]
fn vdp3_runs_with_a_hundred_controls() {
    let mut b = benchmark("vdp3", None).unwrap();
    b.horizon = 0.25;
    let s = run_benchmark(&b, &b.prune_config()).unwrap();
    assert_eq!(s.built.tree.branching(), 100);
    assert!(s.controlled.total <= s.uncontrolled.total);
}
