//! Small hand-checkable cases for every public operation.

use dyndev::deviation::{axiom_report, deterministic_d0, law_probe, utility, ProbeInput};
use dyndev::drivers::{check_driver, cvar_nu, var_nu, CustomDriver};
use dyndev::lattice::{cond_exp, law, leaf_probabilities};
use dyndev::optim::{brute_force_min, minimize, FnOracle};
use dyndev::repr::{assemble, lift_analytic, AnalyticPayoff};
use dyndev::sharing::{infconv_value, proportional_transfer, residual_check};
use dyndev::{
    evaluate, evaluate_recursive, represent, solve_sharing, DriverSpec, Error, Filtration, JumpMeasure, Lattice,
    NoiseModel, RandomVariable, RepresentingPair, SharingProblem, SolverConfig, TimeGrid,
};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn binomial(n: usize) -> Lattice {
    Lattice::build(TimeGrid::uniform(1.0, n).unwrap(), NoiseModel::brownian(1).unwrap(), 1 << 12).unwrap()
}

fn jumps(marks: &[f64], nu: &[f64]) -> JumpMeasure {
    JumpMeasure::scalar(marks, nu).unwrap()
}

/// `W` at `node` of `level`, read off the path to its first leaf.
fn w_at(lat: &Lattice, level: usize, node: usize) -> f64 {
    let leaf = lat.subtree_leaves(level, node).start;
    lat.path_edges(leaf)[..level].iter().enumerate().map(|(i, &e)| lat.step(i).edges[e].dw[0]).sum()
}

#[test]
fn lattice_shapes() {
    let lat = binomial(1);
    assert_eq!(lat.leaf_count(), 2);
    assert_eq!(leaf_probabilities(&lat), vec![0.5, 0.5]);
    let mut w: Vec<f64> = (0..2).map(|l| lat.terminal_state(l).w[0]).collect();
    w.sort_by(f64::total_cmp);
    assert_eq!(w, vec![-1.0, 1.0]);

    let noise = NoiseModel::new(1, jumps(&[1.0], &[0.5])).unwrap();
    let lat = Lattice::build(TimeGrid::uniform(1.0, 2).unwrap(), noise, 1 << 8).unwrap();
    assert_eq!(lat.branching(), 4);
    let p_jump: f64 = lat.step(0).edges.iter().filter(|e| e.jump > 0).map(|e| e.prob).sum();
    assert_eq!(p_jump, 0.25);

    let r = Lattice::build(TimeGrid::uniform(1.0, 10).unwrap(), NoiseModel::brownian(2).unwrap(), 10_000);
    assert!(matches!(r, Err(Error::NodeBudget { .. })));
}

#[test]
fn conditional_expectations() {
    let lat = binomial(2);
    let c = RandomVariable::constant(3.5, lat.leaf_count());
    for level in 0..=2 {
        assert!(cond_exp(&lat, &c, level).unwrap().iter().all(|&v| v == 3.5));
    }
    let first = lat.payoff_from_path(|e| lat.step(0).edges[e[0]].dw[0]);
    assert!(cond_exp(&lat, &first, 0).unwrap()[0].abs() < 1e-15);

    let lat = binomial(4);
    let x = lat.payoff_from_terminal(|s| s.w[0] * s.w[0]);
    for level in 0..=4 {
        let t = level as f64 / 4.0;
        for (k, v) in cond_exp(&lat, &x, level).unwrap().iter().enumerate() {
            let w = w_at(&lat, level, k);
            assert!(close(*v, w * w + 1.0 - t, 1e-12), "level {level} node {k}");
        }
    }
}

#[test]
fn laws() {
    let lat = binomial(2);
    let five = law(&lat, &RandomVariable::constant(5.0, 4), 0.0).unwrap();
    assert_eq!(five.atoms, vec![(5.0, 1.0)]);
    let w = law(&lat, &lat.payoff_from_terminal(|s| s.w[0]), 1e-12).unwrap();
    let r2 = 2f64.sqrt();
    let expected = [(-r2, 0.25), (0.0, 0.5), (r2, 0.25)];
    assert_eq!(w.atoms.len(), 3);
    for ((v, p), (ev, ep)) in w.atoms.iter().zip(expected) {
        assert!(close(*v, ev, 1e-12) && close(*p, ep, 1e-15));
    }
    let lat = binomial(3);
    let x = lat.payoff_from_path(|e| (e[0] * 3 + e[1] * 2 + e[2]) as f64);
    let y = lat.permute_steps(&x, &[2, 0, 1]).unwrap();
    assert_eq!(law(&lat, &x, 0.0).unwrap(), law(&lat, &y, 0.0).unwrap());
}

#[test]
fn representations() {
    let lat = binomial(4);
    let pair = represent(&lat, &lat.payoff_from_terminal(|s| s.w[0])).unwrap();
    assert!(pair.mean.abs() < 1e-15);
    assert!(pair.steps.iter().flatten().all(|s| close(s.h[0], 1.0, 1e-12)));
    assert_eq!(pair.max_residual(), 0.0);

    let pair = represent(&lat, &lat.payoff_from_terminal(|s| s.w[0] * s.w[0])).unwrap();
    for (level, nodes) in pair.steps.iter().enumerate() {
        for (k, s) in nodes.iter().enumerate() {
            assert!(close(s.h[0], 2.0 * w_at(&lat, level, k), 1e-12));
        }
    }
    assert!(pair.max_residual() < 1e-12);

    let noise = NoiseModel::new(1, jumps(&[1.0, -1.0], &[0.3, 0.2])).unwrap();
    let lat = Lattice::build(TimeGrid::uniform(1.0, 2).unwrap(), noise, 1 << 10).unwrap();
    let pair = represent(&lat, &lat.payoff_from_terminal(|s| s.compensated[1])).unwrap();
    for s in pair.steps.iter().flatten() {
        assert!(s.h[0].abs() < 1e-12 && s.htilde[0].abs() < 1e-12 && close(s.htilde[1], 1.0, 1e-12));
    }
    assert!(pair.max_residual() < 1e-12);
}

#[test]
fn assembly_and_lifting() {
    let lat = binomial(3);
    assert!(assemble(&lat, &RepresentingPair::zero(&lat, 7.0)).unwrap().values().iter().all(|&v| v == 7.0));
    let x = lat.payoff_from_terminal(|s| s.w[0].sin());
    let back = assemble(&lat, &represent(&lat, &x).unwrap()).unwrap();
    assert!(back.max_abs_diff(&x) < 1e-12);

    let lat = binomial(2);
    let grid = TimeGrid::uniform(1.0, 2).unwrap();
    let ones = AnalyticPayoff::constant(grid.clone(), vec![1.0], vec![]).unwrap();
    let pair = lift_analytic(&ones, &lat).unwrap();
    assert!(pair.steps.iter().flatten().all(|s| s.h == vec![1.0]));
    let y = assemble(&lat, &pair).unwrap();
    assert!(y.max_abs_diff(&lat.payoff_from_terminal(|s| s.w[0])) < 1e-15);

    let lat = binomial(4);
    let front = AnalyticPayoff::new(
        TimeGrid::uniform(1.0, 4).unwrap(),
        vec![vec![2f64.sqrt()], vec![2f64.sqrt()], vec![0.0], vec![0.0]],
        vec![vec![]; 4],
    )
    .unwrap();
    let pair = lift_analytic(&front, &lat).unwrap();
    for (level, nodes) in pair.steps.iter().enumerate() {
        let want = if level < 2 { 2f64.sqrt() } else { 0.0 };
        assert!(nodes.iter().all(|s| s.h[0] == want));
    }
    let empty = AnalyticPayoff::constant(TimeGrid::uniform(1.0, 0).unwrap(), vec![1.0], vec![]).unwrap();
    let flat = Lattice::build(TimeGrid::uniform(1.0, 0).unwrap(), NoiseModel::brownian(1).unwrap(), 4).unwrap();
    assert!(lift_analytic(&empty, &flat).is_err());
}

#[test]
fn driver_values() {
    let none = JumpMeasure::none();
    assert_eq!(DriverSpec::variance(2.0).eval(0.0, &[1.0], &[], &none).unwrap(), 2.0);
    let one = jumps(&[1.0], &[1.0]);
    assert_eq!(DriverSpec::norm_cd(1.0, 2.0).eval(0.0, &[3.0, 4.0], &[3.0], &one).unwrap(), 11.0);
    let nu = jumps(&[-1.0, 2.0], &[0.3, 0.7]);
    for g in [DriverSpec::variance(1.0), DriverSpec::norm_cd(1.0, 1.0), DriverSpec::CvarJump { a: 0.5 }] {
        assert_eq!(g.eval(0.0, &[0.0], &[0.0, 0.0], &nu).unwrap(), 0.0);
    }
}

#[test]
fn jump_quantiles() {
    let nu = jumps(&[-1.0, 2.0], &[0.3, 0.7]);
    let ident = [-1.0, 2.0];
    for a in [0.1, 0.5, 0.9] {
        assert_eq!(var_nu(a, &[0.0, 0.0], &nu).unwrap(), 0.0);
        assert_eq!(cvar_nu(a, &[0.0, 0.0], &nu).unwrap(), 0.0);
    }
    assert_eq!(var_nu(0.2, &ident, &nu).unwrap(), 1.0);
    assert_eq!(var_nu(0.4, &ident, &nu).unwrap(), -2.0);
    assert!(close(cvar_nu(0.5, &ident, &nu).unwrap(), -0.2, 1e-15));
    let single = jumps(&[1.0], &[1.0]);
    for b in [0.1, 0.25, 0.5] {
        assert_eq!(var_nu(b, &[5.0], &single).unwrap(), -5.0);
    }
    assert_eq!(cvar_nu(0.5, &[5.0], &single).unwrap(), -5.0);
}

#[test]
fn subgradients() {
    let half = jumps(&[1.0], &[0.5]);
    let v = DriverSpec::variance(1.0);
    assert_eq!(v.subgradient(0.0, &[0.0], &[0.0], &half).unwrap(), vec![0.0, 0.0]);
    assert_eq!(v.subgradient(0.0, &[2.0], &[4.0], &half).unwrap(), vec![4.0, 4.0]);
    let g = DriverSpec::norm_cd(1.0, 0.0).subgradient(0.0, &[3.0, 4.0], &[], &JumpMeasure::none()).unwrap();
    assert!(close(g[0], 0.6, 1e-15) && close(g[1], 0.8, 1e-15));
}

#[test]
fn driver_validity() {
    let noise = NoiseModel::new(1, jumps(&[-1.0, 2.0], &[0.3, 0.7])).unwrap();
    assert!(check_driver(&DriverSpec::variance(1.0), &noise, 300, 0).unwrap().passed());
    assert!(check_driver(&DriverSpec::norm_cd(1.0, 1.0), &noise, 300, 0).unwrap().passed());
    let r = check_driver(&DriverSpec::CvarJump { a: 0.5 }, &noise, 300, 0).unwrap();
    let w = r.nonnegativity.witness.unwrap();
    assert_eq!(w.points[0].1, vec![-1.0, 2.0]);
}

#[test]
fn deviation_values() {
    let lat = binomial(4);
    let x = lat.payoff_from_terminal(|s| s.w[0]);
    let pair = represent(&lat, &x).unwrap();
    let var = evaluate(&lat, &DriverSpec::variance(1.0), &pair).unwrap();
    assert!(close(var.initial(), 1.0, 1e-12));
    assert!(close(evaluate(&lat, &DriverSpec::norm_cd(1.0, 0.0), &pair).unwrap().initial(), 1.0, 1e-12));
    let zero = evaluate(&lat, &DriverSpec::norm_cd(1.0, 1.0), &RepresentingPair::zero(&lat, 4.0)).unwrap();
    assert!(zero.values.levels().iter().flatten().all(|&v| v == 0.0));

    let whole = evaluate_recursive(&lat, &DriverSpec::variance(1.0), &pair, &[0, 4]).unwrap();
    assert_eq!(whole.values, var.values);
    let fine = evaluate_recursive(&lat, &DriverSpec::variance(1.0), &pair, &[0, 1, 2, 3, 4]).unwrap();
    assert!(close(fine.initial(), 1.0, 1e-12));

    assert!(close(utility(&lat, &x, &var, 0).unwrap()[0], -1.0, 1e-12));
    let c = RandomVariable::constant(2.0, lat.leaf_count());
    let dc = evaluate(&lat, &DriverSpec::variance(1.0), &represent(&lat, &c).unwrap()).unwrap();
    assert!(utility(&lat, &c, &dc, 2).unwrap().iter().all(|&u| u == 2.0));
}

#[test]
fn deterministic_integrals() {
    let none = JumpMeasure::none();
    let g = DriverSpec::norm_cd(1.0, 0.0);
    let flat = AnalyticPayoff::constant(TimeGrid::uniform(1.0, 2).unwrap(), vec![1.0], vec![]).unwrap();
    assert_eq!(deterministic_d0(&flat.grid, &g, &flat, &none).unwrap(), 1.0);
    let front = AnalyticPayoff::new(
        TimeGrid::uniform(1.0, 2).unwrap(),
        vec![vec![2f64.sqrt()], vec![0.0]],
        vec![vec![], vec![]],
    )
    .unwrap();
    assert!(close(deterministic_d0(&front.grid, &g, &front, &none).unwrap(), std::f64::consts::FRAC_1_SQRT_2, 1e-15));
    let zero = AnalyticPayoff::constant(TimeGrid::uniform(1.0, 3).unwrap(), vec![0.0], vec![]).unwrap();
    assert_eq!(deterministic_d0(&zero.grid, &g, &zero, &none).unwrap(), 0.0);
}

#[test]
fn axiom_suites() {
    let lat = binomial(4);
    let xs: Vec<RandomVariable> = (0..3).map(|k| lat.payoff_from_terminal(|s| (s.w[0] + k as f64).powi(3))).collect();
    assert!(axiom_report(&lat, &DriverSpec::variance(1.0), &xs, 1).unwrap().passed());

    let noise = NoiseModel::new(1, jumps(&[1.0], &[0.4])).unwrap();
    let jl = Lattice::build(TimeGrid::uniform(1.0, 3).unwrap(), noise, 1 << 10).unwrap();
    let ys: Vec<RandomVariable> =
        (0..3).map(|k| jl.payoff_from_terminal(|s| (s.w[0] * s.compensated[0] + k as f64).sin())).collect();
    let r = axiom_report(&jl, &DriverSpec::norm_cd(1.0, 1.0), &ys, 2).unwrap();
    assert!(r.passed(), "{r:#?}");

    let concave = DriverSpec::Custom(CustomDriver::new("sqrt", |_, h, _| h[0].abs().sqrt()));
    let r = axiom_report(&lat, &concave, &xs, 3).unwrap();
    assert!(!r.d3.passed && r.d3.witness.is_some());
}

#[test]
fn law_probes() {
    let lat = binomial(4);
    let x = lat.payoff_from_path(|e| (2.0 * e[0] as f64 - 1.0) * e[1] as f64 + (e[2] * e[3]) as f64);
    let y = lat.permute_steps(&x, &[1, 0, 2, 3]).unwrap();
    let r = law_probe(&lat, &DriverSpec::variance(1.0), &[ProbeInput::Lattice { label: "p".into(), x, y }]).unwrap();
    assert!(r.max_gap <= 1e-10);

    let grid = TimeGrid::uniform(1.0, 2).unwrap();
    let flat = AnalyticPayoff::constant(grid.clone(), vec![1.0], vec![]).unwrap();
    let front = AnalyticPayoff::new(grid, vec![vec![2f64.sqrt()], vec![0.0]], vec![vec![], vec![]]).unwrap();
    let r = law_probe(
        &binomial(2),
        &DriverSpec::norm_cd(1.0, 0.0),
        &[ProbeInput::Analytic { label: "a".into(), x: flat, y: front }],
    )
    .unwrap();
    assert!(close(r.max_gap, 0.29289322, 1e-8));
}

#[test]
fn inf_convolutions() {
    let none = JumpMeasure::none();
    let cfg = SolverConfig::default();
    let v = DriverSpec::variance(1.0);
    let r = infconv_value(&v, &v, 0.0, &[2.0], &[], &none, &cfg).unwrap();
    assert!(close(r.value, 2.0, 1e-12) && close(r.z[0], 1.0, 1e-12));
    let r =
        infconv_value(&DriverSpec::norm_cd(2.0, 0.0), &DriverSpec::norm_cd(1.0, 0.0), 0.0, &[3.0], &[], &none, &cfg)
            .unwrap();
    assert!(close(r.value, 3.0, 1e-9) && close(r.z[0], 3.0, 1e-9));
    let r = infconv_value(&DriverSpec::norm_cd(1.0, 1.0), &v, 0.0, &[0.0], &[], &none, &cfg).unwrap();
    assert_eq!((r.value, r.z[0]), (0.0, 0.0));
}

#[test]
fn sharing_cases() {
    let lat = binomial(4);
    let xa = lat.payoff_from_terminal(|s| s.w[0].powi(3));
    let xb = lat.payoff_from_terminal(|s| (s.w[0]).cos());
    let v = DriverSpec::variance(1.0);
    let sol = solve_sharing(&lat, &SharingProblem::new(xa.clone(), xb.clone(), v.clone(), v.clone())).unwrap();
    let total = xa.add(&xb).unwrap();
    let centered = total.shift(-total.values().iter().zip(leaf_probabilities(&lat)).map(|(x, p)| x * p).sum::<f64>());
    assert!(sol.y_star.max_abs_diff(&centered.scale(0.5)) < 1e-12);
    let var = law(&lat, &total, 0.0).unwrap().variance();
    assert!(close(sol.infconv_d.initial(), 0.5 * var, 1e-10));

    let g = DriverSpec::norm_cd(1.0, 0.0);
    let prob =
        SharingProblem::new(xa.clone(), xb.clone(), DriverSpec::scaled(1.0, g.clone()), DriverSpec::scaled(3.0, g));
    let sol = solve_sharing(&lat, &prob).unwrap();
    let diff = sol.y_tilde_star.sub(&xa.combine(0.75, &xb, -0.25).unwrap()).unwrap();
    assert!(diff.values().iter().all(|d| close(*d, diff.values()[0], 1e-10)));
    assert_eq!(sol.share_factor(), Some(0.75));

    let sol = solve_sharing(&lat, &SharingProblem::new(xa.clone(), xa.scale(-1.0), v.clone(), v)).unwrap();
    assert!(sol.y_star.values().iter().all(|&y| y == 0.0));
    assert!(sol.infconv_d.values.levels().iter().flatten().all(|&d| d == 0.0));
}

#[test]
fn proportional_transfers() {
    let x = RandomVariable::new(vec![1.0, -2.0, 4.0]);
    let y = RandomVariable::new(vec![0.5, 3.0, -1.0]);
    assert_eq!(proportional_transfer(2.0, 2.0, &x, &y).unwrap(), x.sub(&y).unwrap().scale(0.5));
    assert_eq!(proportional_transfer(1.0, 3.0, &x, &y).unwrap(), x.combine(0.75, &y, -0.25).unwrap());
    assert!(proportional_transfer(1.0, 3.0, &x, &x).unwrap().max_abs_diff(&x.scale(0.5)) < 1e-15);
}

#[test]
fn residual_risk_reports() {
    let lat = binomial(3);
    let xa = lat.payoff_from_terminal(|s| s.w[0].powi(3));
    let xb = lat.payoff_from_terminal(|s| s.w[0].exp());
    let prob = SharingProblem::new(xa.clone(), xb.clone(), DriverSpec::variance(1.0), DriverSpec::variance(1.0));
    let r = residual_check(&lat, &solve_sharing(&lat, &prob).unwrap(), &prob).unwrap();
    assert_eq!(r.interior_nodes, r.risky_nodes);
    assert_eq!(r.conclusion_holds, Some(true));

    let prob = SharingProblem::new(xa.clone(), xb, DriverSpec::norm_cd(2.0, 0.0), DriverSpec::norm_cd(1.0, 0.0));
    let r = residual_check(&lat, &solve_sharing(&lat, &prob).unwrap(), &prob).unwrap();
    assert_eq!(r.conclusion_holds, None);
    assert_eq!(r.full_corners, r.risky_nodes);

    let prob = SharingProblem::new(
        xa.clone(),
        xa.scale(-1.0).shift(3.0),
        DriverSpec::variance(1.0),
        DriverSpec::variance(1.0),
    );
    assert!(residual_check(&lat, &solve_sharing(&lat, &prob).unwrap(), &prob).unwrap().skipped);
}

#[test]
fn minimizer_cases() {
    let cfg = SolverConfig::default();
    let quad = FnOracle { value: |x: &[f64]| (x[0] - 3.0).powi(2), subgradient: |x: &[f64]| vec![2.0 * (x[0] - 3.0)] };
    let r = minimize(&quad, &[0.0], &cfg).unwrap();
    assert!(close(r.argmin[0], 3.0, 1e-6) && r.value < 1e-10);

    let kinks = FnOracle {
        value: |x: &[f64]| (x[0] - 2.0).abs() + x[0].abs(),
        subgradient: |x: &[f64]| vec![(x[0] - 2.0).signum() + x[0].signum()],
    };
    let r = minimize(&kinks, &[5.0], &cfg).unwrap();
    assert!(close(r.value, 2.0, 1e-6) && (-1e-6..=2.0 + 1e-6).contains(&r.argmin[0]));
    let (_, bv) = brute_force_min(|x| (x[0] - 2.0).abs() + x[0].abs(), &[(-1.0, 5.0)], 1e-4).unwrap();
    assert!(close(bv, 2.0, 1e-9));

    let l1 = FnOracle {
        value: |x: &[f64]| x[0].abs() + 2.0 * x[1].abs(),
        subgradient: |x: &[f64]| vec![x[0].signum(), 2.0 * x[1].signum()],
    };
    let r = minimize(&l1, &[1.0, 1.0], &cfg).unwrap();
    assert!(r.value < 1e-6 && r.argmin.iter().all(|v| v.abs() < 1e-6));
}

#[test]
fn brute_force_cases() {
    let (z, v) = brute_force_min(|z| (2.0 - z[0]).powi(2) + z[0].powi(2), &[(-4.0, 6.0)], 1e-4).unwrap();
    assert!(close(v, 2.0, 1e-3) && close(z[0], 1.0, 1e-3));
    let (x, v) = brute_force_min(|x| x[0].abs(), &[(-1.0, 1.0)], 0.5).unwrap();
    assert_eq!((x[0], v), (0.0, 0.0));
    assert!(brute_force_min(|x| x[0], &[(1.0, -1.0)], 0.1).is_err());
    assert!(brute_force_min(|x| x[0], &[], 0.1).is_err());
}
