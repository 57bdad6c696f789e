use super::*;
use crate::assembly::{assemble_load, assemble_residual, assemble_time_matrix};
use crate::fespace::build_space;
use crate::mesh::build_box_mesh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn space(d: usize, n: usize, k: usize) -> Arc<FeSpace> {
    build_space(Arc::new(build_box_mesh(d, n).unwrap()), k).unwrap()
}

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> SparseOperator {
    let b: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|k| b[i][k] * b[j][k]).sum::<f64>() + if i == j { n as f64 } else { 0.0 })
                .collect()
        })
        .collect();
    SparseOperator::from_dense(&a).unwrap()
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn residual_norm(k: &SparseOperator, x: &[f64], b: &[f64]) -> f64 {
    let kx = k.apply(x);
    norm(&kx.iter().zip(b).map(|(a, c)| a - c).collect::<Vec<_>>())
}

#[test]
fn identity_in_one_iteration() {
    let k = SparseOperator::identity(7);
    let b: Vec<f64> = (0..7).map(|i| i as f64 - 3.0).collect();
    let sol = linear_solve(&k, &b, &LinearSolverConfig::default()).unwrap();
    assert_eq!(sol.iterations, 1);
    assert!(sol.converged);
    for (x, y) in sol.x.iter().zip(&b) {
        assert!((x - y).abs() < 1e-15);
    }
}

#[test]
fn zero_rhs_zero_iterations() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let k = random_spd(10, &mut rng);
    for kind in [LinearSolverKind::Gmres, LinearSolverKind::Direct] {
        let cfg = LinearSolverConfig { kind, ..Default::default() };
        let sol = linear_solve(&k, &[0.0; 10], &cfg).unwrap();
        assert_eq!(sol.iterations, 0);
        assert!(sol.x.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn gmres_matches_direct_on_spd() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = random_spd(50, &mut rng);
    let b = random_vec(50, &mut rng);
    let xd = linear_solve(&k, &b, &LinearSolverConfig::direct()).unwrap().x;
    assert!(residual_norm(&k, &xd, &b) < 1e-12 * norm(&b));
    for pre in [Preconditioner::None, Preconditioner::Jacobi, Preconditioner::Ilu0] {
        let cfg = LinearSolverConfig {
            preconditioner: pre,
            ..Default::default()
        };
        let sol = linear_solve(&k, &b, &cfg).unwrap();
        assert!(sol.converged);
        let diff: Vec<f64> = sol.x.iter().zip(&xd).map(|(a, c)| a - c).collect();
        assert!(norm(&diff) / norm(&xd) < 1e-6, "{pre:?}");
        assert!(residual_norm(&k, &sol.x, &b) <= 1.01e-8 * norm(&b));
        for w in sol.residuals.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }
}

#[test]
fn gmres_reports_iteration_cap() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let k = random_spd(40, &mut rng);
    let b = random_vec(40, &mut rng);
    let cfg = LinearSolverConfig {
        gmres_max_iter: 3,
        preconditioner: Preconditioner::None,
        ..Default::default()
    };
    let sol = linear_solve(&k, &b, &cfg).unwrap();
    assert_eq!(sol.iterations, 3);
    assert!(!sol.converged);
}

#[test]
fn singular_direct_solve_is_an_error() {
    let k = SparseOperator::from_dense(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let r = linear_solve(&k, &[1.0, 2.0], &LinearSolverConfig::direct());
    assert!(matches!(r, Err(Error::Singular(_))));
}

#[test]
fn transpose_solves_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = space(1, 4, 1);
    let prob = ProblemDefinition::manufactured(1, 2.0, 1.0).unwrap();
    let k = assemble_jacobian(&s, &FeFunction::zeros(&s), &prob).unwrap();
    let b = random_vec(s.n_dofs(), &mut rng);
    let xd = linear_solve_transpose(&k, &b, &LinearSolverConfig::direct()).unwrap().x;
    let xg = linear_solve_transpose(&k, &b, &LinearSolverConfig::default()).unwrap().x;
    let kt = k.transpose();
    assert!(residual_norm(&kt, &xd, &b) < 1e-12 * norm(&b));
    let diff: Vec<f64> = xg.iter().zip(&xd).map(|(a, c)| a - c).collect();
    assert!(norm(&diff) < 1e-6 * norm(&xd));
    // w^T (K z) = (K^T w)^T z
    let w = random_vec(s.n_dofs(), &mut rng);
    let z = random_vec(s.n_dofs(), &mut rng);
    let lhs: f64 = w.iter().zip(k.apply(&z)).map(|(a, c)| a * c).sum();
    let rhs: f64 = kt.apply(&w).iter().zip(&z).map(|(a, c)| a * c).sum();
    assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
}

#[test]
fn linear_problem_takes_one_newton_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s = space(1, 6, 1);
    let prob = ProblemDefinition::manufactured(1, 2.0, 1.0).unwrap();
    let init = FeFunction::from_coeffs(&s, random_vec(s.n_dofs(), &mut rng)).unwrap();
    let (u, stats) = newton_solve(&prob, &s, &init, &NewtonConfig::default(), &LinearSolverConfig::direct()).unwrap();
    assert!(stats.converged);
    assert_eq!(stats.newton_iters, 1);
    let fh = assemble_load(&s, &prob).unwrap();
    assert!(norm(&assemble_residual(&s, &u, &prob).unwrap()) < 1e-10 * norm(&fh));
}

#[test]
fn nonlinear_newton_converges_with_monotone_residuals() {
    let s = space(1, 4, 1);
    let prob = ProblemDefinition::manufactured(1, 4.0, 1.0).unwrap();
    let (_, stats) = newton_solve(
        &prob,
        &s,
        &FeFunction::zeros(&s),
        &NewtonConfig::default(),
        &LinearSolverConfig::direct(),
    )
    .unwrap();
    assert!(stats.converged);
    assert!(stats.newton_iters <= 15);
    let h = &stats.residual_history;
    for w in h.windows(2) {
        assert!(w[1] < w[0]);
    }
    // superlinear tail: contraction ratios decrease over the last steps
    let n = h.len();
    assert!(n >= 4);
    let ratios: Vec<f64> = (n - 3..n).map(|i| h[i] / h[i - 1]).collect();
    assert!(ratios[1] < ratios[0] && ratios[2] < ratios[1], "{ratios:?}");
    // the same iteration with GMRES
    let (_, gstats) =
        newton_solve(&prob, &s, &FeFunction::zeros(&s), &NewtonConfig::default(), &LinearSolverConfig::default()).unwrap();
    assert!(gstats.converged);
    assert!(gstats.total_inner_iters >= gstats.newton_iters);
}

#[test]
fn newton_reports_iteration_cap() {
    let s = space(1, 4, 1);
    let prob = ProblemDefinition::manufactured(1, 4.0, 1e-5).unwrap();
    let cfg = NewtonConfig {
        max_iter: 1,
        ..Default::default()
    };
    let (_, stats) = newton_solve(&prob, &s, &FeFunction::zeros(&s), &cfg, &LinearSolverConfig::direct()).unwrap();
    assert!(!stats.converged);
    assert_eq!(stats.newton_iters, 1);
}

#[test]
fn adjoint_satisfies_defining_identity() {
    let s = space(1, 4, 2);
    let prob = ProblemDefinition::manufactured(1, 4.0, 1.0).unwrap();
    let (u, _) = newton_solve(
        &prob,
        &s,
        &FeFunction::zeros(&s),
        &NewtonConfig::default(),
        &LinearSolverConfig::direct(),
    )
    .unwrap();
    let goal = GoalFunctional::FinalTimeIntegral;
    let (z, _) = solve_adjoint(&prob, &s, &u, &goal, &LinearSolverConfig::direct()).unwrap();
    let g = goal.gradient(&s, &u).unwrap();
    let ktz = assemble_jacobian(&s, &u, &prob).unwrap().transpose().apply(&z.coeffs);
    for i in 0..s.n_dofs() {
        if !s.is_constrained(i) {
            assert!((ktz[i] - g[i]).abs() <= 1e-8 * norm(&g));
        }
    }
}

/// For p = 2 the adjoint of the final-time goal is the discrete backward heat
/// problem `(T^T + A) z = g`, assembled here from its parts.
#[test]
fn linear_adjoint_is_backward_heat_solution() {
    let s = space(1, 5, 1);
    let prob = ProblemDefinition::manufactured(1, 2.0, 1.0).unwrap();
    let u = FeFunction::zeros(&s);
    let goal = GoalFunctional::FinalTimeIntegral;
    let (z, _) = solve_adjoint(&prob, &s, &u, &goal, &LinearSolverConfig::direct()).unwrap();
    let k = assemble_jacobian(&s, &u, &prob).unwrap();
    let t = assemble_time_matrix(&s, &prob).unwrap();
    // A = K - T (symmetric stiffness); backward operator B = A + T^T
    let tt = t.transpose();
    let mut b = k.clone();
    for (idx, v) in b.values_mut().iter_mut().enumerate() {
        *v = *v - t.values()[idx] + tt.values()[idx];
    }
    b.constrain(s.constrained_mask());
    let g = goal.gradient(&s, &u).unwrap();
    let zb = linear_solve(&b, &g, &LinearSolverConfig::direct()).unwrap().x;
    for (a, c) in z.coeffs.iter().zip(&zb) {
        assert!((a - c).abs() < 1e-8);
    }
}

#[test]
fn zero_goal_gradient_gives_zero_adjoint() {
    let prob = ProblemDefinition::manufactured(1, 4.0, 1.0).unwrap();
    let mesh = crate::goals::region_aligned_mesh(1, 4).unwrap();
    let rs = build_space(Arc::new(mesh), 1).unwrap();
    let goal = GoalFunctional::p_energy(crate::goals::Region::diamond(), 4.0, rs.mesh()).unwrap();
    let (z, sol) = solve_adjoint(&prob, &rs, &FeFunction::zeros(&rs), &goal, &LinearSolverConfig::default()).unwrap();
    assert_eq!(sol.iterations, 0);
    assert!(z.coeffs.iter().all(|&x| x == 0.0));
}
