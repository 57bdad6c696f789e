use super::*;
use crate::fespace::build_space;
use crate::mesh::build_box_mesh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn space(d: usize, n: usize, k: usize) -> Arc<FeSpace> {
    build_space(Arc::new(build_box_mesh(d, n).unwrap()), k).unwrap()
}

fn random_function(space: &Arc<FeSpace>, rng: &mut ChaCha8Rng) -> FeFunction {
    let coeffs = (0..space.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut u = FeFunction::from_coeffs(space, coeffs).unwrap();
    u.zero_constrained();
    u
}

fn polynomial_problem(d: usize, p: f64, eps: f64) -> ProblemDefinition {
    ProblemDefinition::new(d, p, eps, Arc::new(move |x: &[f64]| x[0] * x[d] + x[d] * x[d])).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn flux_examples() {
    assert_eq!(flux(&[0.3, -1.2], 2.0, 0.7), [0.3, -1.2]);
    let f = flux(&[1.0, 0.0], 4.0, 1.0);
    assert!((f[0] - 2.0).abs() < 1e-15 && f[1] == 0.0);
    assert_eq!(flux(&[0.0], 1.5, 0.1), [0.0, 0.0]);
    let j = flux_jacobian(&[1.0, 0.0], 4.0, 1.0);
    assert!((j[0][0] - 4.0).abs() < 1e-15 && (j[1][1] - 2.0).abs() < 1e-15 && j[0][1] == 0.0);
    assert_eq!(flux_jacobian(&[0.4, 2.0], 2.0, 1e-3), [[1.0, 0.0], [0.0, 1.0]]);
}

#[test]
fn flux_jacobian_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = 1e-6;
    for _ in 0..20 {
        let g = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let j = flux_jacobian(&g, 4.0, 1e-5);
        for c in 0..2 {
            let (mut gp, mut gm) = (g, g);
            gp[c] += h;
            gm[c] -= h;
            let (fp, fm) = (flux(&gp, 4.0, 1e-5), flux(&gm, 4.0, 1e-5));
            for r in 0..2 {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                assert!((fd - j[r][c]).abs() <= 1e-5 * j[r][c].abs().max(1e-3));
            }
        }
    }
}

#[test]
fn zero_state_zero_source() {
    let s = space(1, 3, 2);
    let prob = ProblemDefinition::new(1, 3.0, 0.5, Arc::new(|_: &[f64]| 0.0)).unwrap();
    let r = assemble_residual(&s, &FeFunction::zeros(&s), &prob).unwrap();
    assert!(r.iter().all(|&x| x == 0.0));
}

#[test]
fn dimension_mismatch() {
    let s = space(1, 2, 1);
    let prob = ProblemDefinition::manufactured(2, 2.0, 1.0).unwrap();
    assert!(matches!(
        assemble_residual(&s, &FeFunction::zeros(&s), &prob),
        Err(Error::DimensionMismatch(_))
    ));
}

#[test]
fn jacobian_is_derivative_of_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-6;
    for (d, k) in [(1, 1), (1, 2), (2, 1)] {
        let s = space(d, 3, k);
        for p in [1.5, 2.0, 4.0] {
            for eps in [1.0, 1e-5] {
                let prob = ProblemDefinition::manufactured(d, p, eps).unwrap();
                let u = random_function(&s, &mut rng);
                let delta = random_function(&s, &mut rng);
                let kd = assemble_jacobian(&s, &u, &prob).unwrap().apply(&delta.coeffs);
                let shifted = |sign: f64| {
                    let c: Vec<f64> = u.coeffs.iter().zip(&delta.coeffs).map(|(a, b)| a + sign * h * b).collect();
                    assemble_residual(&s, &FeFunction::from_coeffs(&s, c).unwrap(), &prob).unwrap()
                };
                let (rp, rm) = (shifted(1.0), shifted(-1.0));
                let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
                let diff: Vec<f64> = fd.iter().zip(&kd).map(|(a, b)| a - b).collect();
                let rel = norm(&diff) / norm(&kd);
                assert!(rel < 1e-5, "d {d} k {k} p {p} eps {eps}: {rel}");
            }
        }
    }
}

#[test]
fn jacobian_positive_definite_on_free_dofs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (d, k) in [(1, 1), (1, 2), (2, 1)] {
        let s = space(d, 3, k);
        for p in [1.5, 2.0, 4.0] {
            let prob = ProblemDefinition::manufactured(d, p, 1e-2).unwrap();
            let u = random_function(&s, &mut rng);
            let kmat = assemble_jacobian(&s, &u, &prob).unwrap();
            for _ in 0..5 {
                let w = random_function(&s, &mut rng);
                let kw = kmat.apply(&w.coeffs);
                let q: f64 = w.coeffs.iter().zip(&kw).map(|(a, b)| a * b).sum();
                assert!(q > 0.0);
            }
        }
    }
}

#[test]
fn elliptic_part_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s = space(2, 2, 2);
    let prob = ProblemDefinition::manufactured(2, 4.0, 0.1).unwrap();
    let u = random_function(&s, &mut rng);
    let k = assemble_jacobian(&s, &u, &prob).unwrap();
    let t = assemble_time_matrix(&s, &prob).unwrap();
    let kt = k.transpose();
    let tt = t.transpose();
    let scale = k.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for idx in 0..k.nnz() {
        let a = k.values()[idx] - t.values()[idx];
        let b = kt.values()[idx] - tt.values()[idx];
        assert!((a - b).abs() <= 1e-12 * scale);
    }
    // the time part alone is not symmetric
    assert!(t.values().iter().zip(tt.values()).any(|(a, b)| (a - b).abs() > 1e-3));
}

#[test]
fn linear_case_is_state_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = space(1, 4, 1);
    let prob = ProblemDefinition::manufactured(1, 2.0, 0.3).unwrap();
    let k0 = assemble_jacobian(&s, &FeFunction::zeros(&s), &prob).unwrap();
    let k1 = assemble_jacobian(&s, &random_function(&s, &mut rng), &prob).unwrap();
    for (a, b) in k0.values().iter().zip(k1.values()) {
        assert!((a - b).abs() < 1e-14);
    }
    // K - T is the spatial stiffness: the constant-in-x function has zero energy
    let t = assemble_time_matrix(&s, &prob).unwrap();
    let ones: Vec<f64> = s.dof_coords().iter().map(|x| x[1]).collect();
    let ko = k0.apply(&ones);
    let to = t.apply(&ones);
    for i in 0..s.n_dofs() {
        if !s.is_constrained(i) && s.dof_coords()[i][0] > 0.3 && s.dof_coords()[i][0] < 0.7 {
            assert!((ko[i] - to[i]).abs() < 1e-14);
        }
    }
}

#[test]
fn reference_triangle_time_matrix() {
    let coords = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
    let t = local_time_matrix(2, 1, &coords).unwrap();
    for row in &t {
        for (x, want) in row.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((x - want / 6.0).abs() < 1e-15);
        }
    }
}

/// Element residual by direct pointwise evaluation with an order-8 rule.
#[test]
fn residual_matches_independent_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (d, k) in [(1, 1), (2, 1)] {
        let s = space(d, 2, k);
        let prob = polynomial_problem(d, 4.0, 0.5);
        let u = random_function(&s, &mut rng);
        let r = assemble_residual(&s, &u, &prob).unwrap();
        let rule = quadrature(d + 1, 8).unwrap();
        let mut oracle = vec![0.0; s.n_dofs()];
        for e in 0..s.n_elements() {
            let geo = s.geometry(e);
            for (pt, w) in rule.points().iter().zip(rule.weights()) {
                let uv = u.eval(e, &pt[..d + 1]).unwrap();
                let x = geo.to_physical(d + 1, pt);
                let fl = flux(uv.space_gradient(), 4.0, 0.5);
                for &dof in s.element_dofs(e) {
                    let mut unit = FeFunction::zeros(&s);
                    unit.coeffs[dof] = 1.0;
                    let phi = unit.eval(e, &pt[..d + 1]).unwrap();
                    let mut v = (uv.time_derivative() - prob.source(&x[..d + 1])) * phi.value;
                    for a in 0..d {
                        v += fl[a] * phi.gradient[a];
                    }
                    oracle[dof] += w * geo.det_abs * v;
                }
            }
        }
        for i in 0..s.n_dofs() {
            if s.is_constrained(i) {
                assert_eq!(r[i], 0.0);
            } else {
                assert!((r[i] - oracle[i]).abs() <= 1e-8 * oracle[i].abs().max(1e-8), "{} vs {}", r[i], oracle[i]);
            }
        }
    }
}

#[test]
fn element_forms_sum_to_global_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let s = space(1, 3, 2);
    let prob = ProblemDefinition::manufactured(1, 4.0, 1.0).unwrap();
    let u = random_function(&s, &mut rng);
    let v = random_function(&s, &mut rng);
    let z = random_function(&s, &mut rng);
    let r = assemble_residual(&s, &u, &prob).unwrap();
    let global: f64 = r.iter().zip(&v.coeffs).map(|(a, b)| a * b).sum();
    let local: f64 = residual_by_element(&s, &prob, &u, &v).unwrap().iter().sum();
    assert!((global - local).abs() < 1e-12 * global.abs().max(1.0));
    let kv = assemble_jacobian(&s, &u, &prob).unwrap().apply(&v.coeffs);
    let global: f64 = kv.iter().zip(&z.coeffs).map(|(a, b)| a * b).sum();
    let local: f64 = linearized_by_element(&s, &prob, &u, &v, &z).unwrap().iter().sum();
    assert!((global - local).abs() < 1e-12 * global.abs().max(1.0));
}

#[test]
fn assembly_is_deterministic_across_thread_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let s = space(2, 3, 1);
    let prob = ProblemDefinition::manufactured(2, 4.0, 0.1).unwrap();
    let u = random_function(&s, &mut rng);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = pool.install(|| assemble_residual(&s, &u, &prob).unwrap());
    let parallel = assemble_residual(&s, &u, &prob).unwrap();
    for (a, b) in serial.iter().zip(&parallel) {
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-12));
    }
}
