mod common;

use common::*;
use ouq_core::apps;
use ouq_core::conic::compile;
use ouq_core::oracle::{grid_bound, GridSpec};
use ouq_core::pipeline::{solve_bound, BoundOptions};
use ouq_core::reduce::{merge_masses, reduce};
use ouq_core::solver::{solve, SolverSettings, Status};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

#[test]
fn presolve_is_scaling_neutral() {
    for app in apps::applications() {
        let cp = compile(&reduce(&app.problem).unwrap());
        let on = solve(&cp, &SolverSettings::default().with_tol(1e-11)).unwrap();
        let off = solve(
            &cp,
            &SolverSettings {
                presolve: false,
                ..SolverSettings::default().with_tol(1e-11)
            },
        )
        .unwrap();
        assert_eq!(on.status, Status::Optimal, "{}", app.name);
        assert_eq!(off.status, Status::Optimal, "{}", app.name);
        let rel =
            (on.primal_objective - off.primal_objective).abs() / on.primal_objective.abs().max(1.0);
        assert!(
            rel < 1e-8,
            "{}: {} vs {}",
            app.name,
            on.primal_objective,
            off.primal_objective
        );
    }
}

#[test]
fn returned_points_lie_in_their_cones() {
    for app in apps::applications() {
        let cp = compile(&reduce(&app.problem).unwrap());
        let sol = solve(&cp, &SolverSettings::default()).unwrap();
        assert!(cp.in_cone(&sol.s, 1e-8), "{}: s", app.name);
        assert!(cp.in_dual_cone(&sol.z, 1e-8), "{}: z", app.name);
    }
}

#[test]
fn weak_duality_and_certificate_soundness() {
    for app in apps::applications() {
        let per_axis = if app.lo.len() == 1 { 2001 } else { 13 };
        let grid = GridSpec::new(app.lo.clone(), app.hi.clone(), per_axis).unwrap();
        let opts = BoundOptions {
            verify: Some(grid.clone()),
            oracle: Some(grid),
            ..BoundOptions::default()
        };
        let r = solve_bound(&app.problem, &opts).unwrap();
        let cert = r.certificate.unwrap();
        let b = r.bound.unwrap();
        assert!(b <= cert.mu + 1e-6, "{}", app.name);
        assert!((b - cert.mu).abs() <= 1e-6, "{}", app.name);
        let ver = r.verification.unwrap();
        assert!(ver.passed, "{}: slack {}", app.name, ver.max_slack);
        let oracle = r.oracle.unwrap().value.to_f64();
        assert!(
            oracle <= cert.mu + ver.tolerance,
            "{}: oracle {oracle} above μ {}",
            app.name,
            cert.mu
        );
    }
}

#[test]
fn builders_pass_validation() {
    for app in apps::applications() {
        assert!(
            app.problem.validate().is_empty(),
            "{}: {:?}",
            app.name,
            app.problem.validate()
        );
    }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn grid_refinement_never_loses(which in 0usize..3, n in 11usize..400) {
        let apps = apps::applications();
        let app = &apps[which];
        let settings = SolverSettings::default().with_tol(1e-10);
        let coarse = GridSpec::new(app.lo.clone(), app.hi.clone(), n).unwrap();
        let fine = GridSpec::new(app.lo.clone(), app.hi.clone(), 2 * n - 1).unwrap();
        let a = grid_bound(&app.problem, &coarse, &settings).unwrap().value.to_f64();
        let b = grid_bound(&app.problem, &fine, &settings).unwrap().value.to_f64();
        prop_assert!(b >= a - 1e-9, "{} n={n}: {a} then {b}", app.name);
    }
}

proptest! {
    #![proptest_config(config(300))]

    #[test]
    fn merging_same_cell_atoms_never_hurts(seed in any::<u64>(), family in 0usize..FAMILIES.len()) {
        let mut r = rng(seed);
        let case = merge_case(&mut r, FAMILIES[family]);
        let merged = merge_masses(&case.dist, case.i, case.j).unwrap();
        prop_assert_eq!(merged.atoms.len(), case.dist.atoms.len() - 1);
        prop_assert!((merged.total_weight() - 1.0).abs() < 1e-12);
        prop_assert!(merge_defect(&case, &merged) <= 1e-9);
    }
}
