use wgbf_core::assembly::{assemble_static, dirichlet_values, oseen_local_systems, ProblemParams};
use wgbf_core::dofspace::{SpaceConfig, WgSpace};
use wgbf_core::mesh::{Mesh, Point, Rect};
use wgbf_core::postproc::{check_divergence_free, ExactSolution};
use wgbf_core::scenario::{lid_velocity, Manufactured};
use wgbf_core::solver::{linear_step, oseen_solve, LinearBackend, SolverConfig};
use wgbf_core::Error;

fn space(n: usize, m: usize, k: usize) -> WgSpace {
    WgSpace::new(Mesh::uniform(n, n, Rect::UNIT).unwrap(), SpaceConfig::new(m, k).unwrap(), None).unwrap()
}

fn manufactured(nu: f64, alpha: f64, r: f64) -> ProblemParams {
    ProblemParams::new(nu, alpha, r, Manufactured::force(nu, alpha, r)).unwrap()
}

fn exact(p: Point) -> [f64; 2] {
    Manufactured.velocity(p)
}

#[test]
fn zero_data_converges_to_zero_in_one_iteration() {
    let s = space(4, 1, 0);
    let params = ProblemParams::new(1.0, 5.0, 10.0, ProblemParams::zero_force()).unwrap();
    let sol = oseen_solve(&s, &params, None, &SolverConfig::default()).unwrap();
    assert_eq!(sol.history.iterations(), 1);
    assert!(sol.field.coeffs().iter().all(|v| v.abs() <= 1e-14));
    assert_eq!(sol.multiplier, 0.0);
}

#[test]
fn converged_iterate_is_a_fixed_point_of_the_oseen_step() {
    let s = space(4, 2, 1);
    let params = manufactured(1.0, 5.0, 10.0);
    let cfg = SolverConfig {
        tolerance: 1e-13,
        ..SolverConfig::default()
    };
    let sol = oseen_solve(&s, &params, Some(&exact), &cfg).unwrap();
    let statics = assemble_static(&s, &params);
    let locals = oseen_local_systems(&s, &statics, &params, &sol.field);
    let fixed = dirichlet_values(&s, Some(&exact));
    let step = linear_step(&s, &locals, &fixed, true, &mut LinearBackend::new(), 1, 1).unwrap();
    let gap = step.x.iter().zip(sol.field.coeffs()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap <= 1e-10, "{gap}");
    assert!(sol.history.final_residual <= 1e-9, "{}", sol.history.final_residual);
}

#[test]
fn solution_satisfies_the_discrete_constraints() {
    for (m, k) in [(1, 0), (2, 2)] {
        let s = space(6, m, k);
        let sol = oseen_solve(&s, &manufactured(1.0, 5.0, 10.0), Some(&exact), &SolverConfig::default()).unwrap();
        assert!(s.mean_value(&sol.field).abs() <= 1e-11);
        let (div, jump) = check_divergence_free(&s, &sol.field);
        assert!(div <= 1e-10 && jump <= 1e-10, "m={m} k={k}: {div} {jump}");
        assert!(sol.history.is_monotone(), "{:?}", sol.history.increments);
        assert!(sol.history.residuals.iter().all(|r| *r < 1e-6));
    }
}

#[test]
fn viscous_dominated_problem_converges_quickly() {
    let s = space(8, 1, 0);
    let sol = oseen_solve(&s, &manufactured(100.0, 5.0, 10.0), Some(&exact), &SolverConfig::default()).unwrap();
    assert!(sol.history.iterations() <= 5, "{:?}", sol.history.increments);
    assert!(sol.history.contraction_ratios().iter().all(|r| *r < 0.1));
}

#[test]
fn iteration_limit_is_reported_with_history() {
    let s = space(4, 1, 0);
    let params = ProblemParams::new(0.1, 0.0, 5.0, ProblemParams::zero_force()).unwrap();
    let lid = lid_velocity(1.0, [1.0, 0.0]);
    let cfg = SolverConfig {
        max_iterations: 1,
        ..SolverConfig::default()
    };
    match oseen_solve(&s, &params, Some(&lid), &cfg) {
        Err(Error::NotConverged {
            iterations,
            last_increment,
            history,
        }) => {
            assert_eq!(iterations, 1);
            assert!(last_increment > 1e-8);
            assert_eq!(history.increments.len(), 1);
        }
        other => panic!("expected NotConverged, got {other:?}"),
    }
}

#[test]
fn invalid_parameters_are_rejected() {
    let s = space(2, 1, 0);
    for (nu, alpha, r) in [(0.0, 1.0, 3.0), (1.0, -1.0, 3.0), (1.0, 1.0, 1.5), (f64::NAN, 1.0, 3.0)] {
        let params = ProblemParams {
            nu,
            alpha,
            r,
            eta_scale: 1.0,
            force: ProblemParams::zero_force(),
        };
        let err = oseen_solve(&s, &params, None, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)), "{err}");
    }
    let bad = SolverConfig {
        tolerance: 0.0,
        ..SolverConfig::default()
    };
    let params = manufactured(1.0, 1.0, 3.0);
    assert!(matches!(oseen_solve(&s, &params, None, &bad), Err(Error::InvalidArgument(_))));
}

#[test]
fn repeated_solves_are_bitwise_identical() {
    let s = space(5, 2, 1);
    let params = manufactured(0.5, 5.0, 3.0);
    let a = oseen_solve(&s, &params, Some(&exact), &SolverConfig::default()).unwrap();
    let b = oseen_solve(&s, &params, Some(&exact), &SolverConfig::default()).unwrap();
    assert_eq!(a.field.coeffs(), b.field.coeffs());
    assert_eq!(a.history.increments, b.history.increments);
}
