use super::*;
use crate::models::PdeProblem;
use crate::net::{init_params, EmbeddingSpec, FlatParams, LatentCode, NetworkArch};
use approx::assert_relative_eq;
use ndarray::array;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn system_from(jac: Array2<f64>, rhs: Vec<f64>) -> GalerkinSystem {
    GalerkinSystem {
        points: vec![vec![0.0]; jac.nrows()],
        jacobian: jac,
        rhs,
    }
}

fn random_system(rng: &mut ChaCha8Rng, m: usize, n: usize) -> GalerkinSystem {
    let jac = Array2::from_shape_fn((m, n), |_| rng.gen_range(-1.0..1.0));
    let rhs = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    system_from(jac, rhs)
}

#[test]
fn solve_full_identity_and_average() {
    // J = I -> theta_dot = f
    let sys = system_from(Array2::eye(3), vec![1.0, -2.0, 0.5]);
    let x = solve_full(&sys, 1e-8).unwrap();
    for (a, b) in x.iter().zip(&sys.rhs) {
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    // J = [[1], [1]], f = (1, 3): normal equations give the average 2.
    let sys = system_from(array![[1.0], [1.0]], vec![1.0, 3.0]);
    let x = solve_full(&sys, 1e-8).unwrap();
    assert_relative_eq!(x[0], 2.0, epsilon = 1e-12);

    // f = 0 -> theta_dot = 0 exactly
    let sys = system_from(array![[1.0, 2.0], [3.0, 4.0]], vec![0.0, 0.0]);
    let x = solve_full(&sys, 1e-8).unwrap();
    assert_eq!(x, vec![0.0, 0.0]);
}

#[test]
fn solve_full_degenerate_system() {
    let sys = system_from(Array2::zeros((3, 2)), vec![1.0, 1.0, 1.0]);
    assert!(matches!(
        solve_full(&sys, 1e-8),
        Err(GalerkinError::DegenerateSystem)
    ));
}

#[test]
fn galerkin_orthogonality_full() {
    // || J^T (J x - f) ||_inf <= 1e-8 (1 + || J^T f ||_inf)
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..50 {
        let (m, n) = if trial % 2 == 0 { (40, 25) } else { (20, 35) };
        let sys = random_system(&mut rng, m, n);
        let x = solve_full(&sys, 1e-8).unwrap();
        let jx = sys.jacobian.dot(&ndarray::Array1::from_vec(x));
        let r = &jx - &ndarray::Array1::from_vec(sys.rhs.clone());
        let jt_r = sys.jacobian.t().dot(&r);
        let jt_f = sys.jacobian.t().dot(&ndarray::Array1::from_vec(sys.rhs.clone()));
        let lhs = jt_r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let bound = 1e-8 * (1.0 + jt_f.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        assert!(lhs <= bound, "trial {trial}: {lhs} > {bound}");
    }
}

#[test]
fn sparse_orthogonality_support_and_dominance() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for trial in 0..50 {
        let (m, n) = (30, 40);
        let sys = random_system(&mut rng, m, n);
        let s = 1 + rng.gen_range(0..12);
        let sel = draw_selector(n, s, &mut rng).unwrap();
        let x = solve_sparse(&sys, &sel, 1e-8).unwrap();

        // support containment
        for (j, v) in x.iter().enumerate() {
            if *v != 0.0 {
                assert!(sel.indices().contains(&j), "trial {trial}: spurious support at {j}");
            }
        }

        // subspace normal equations: || J_s^T (J_s xs - f) || small
        let js = Array2::from_shape_fn((m, s), |(i, k)| sys.jacobian[[i, sel.indices()[k]]]);
        let full_x = ndarray::Array1::from_vec(x.clone());
        let r = sys.jacobian.dot(&full_x) - ndarray::Array1::from_vec(sys.rhs.clone());
        let jst_r = js.t().dot(&r);
        let jst_f = js.t().dot(&ndarray::Array1::from_vec(sys.rhs.clone()));
        let lhs = jst_r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let bound = 1e-8 * (1.0 + jst_f.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        assert!(lhs <= bound, "trial {trial}: subspace orthogonality {lhs} > {bound}");

        // the subspace minimum cannot beat the full minimum
        let full = solve_full(&sys, 1e-8).unwrap();
        assert!(
            sys.residual_norm(&x) >= sys.residual_norm(&full) - 1e-10,
            "trial {trial}: sparse residual below full"
        );
    }
}

#[test]
fn sparse_permutation_selector_reproduces_full() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..20 {
        let (m, n) = (25, 12);
        let sys = random_system(&mut rng, m, n);
        // a permutation of 0..n
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        let sel = SparseSelector::from_indices(perm, n).unwrap();
        let sparse = solve_sparse(&sys, &sel, 1e-8).unwrap();
        let full = solve_full(&sys, 1e-8).unwrap();
        for (a, b) in sparse.iter().zip(&full) {
            assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }
    }
}

#[test]
fn sparse_single_column_closed_form() {
    // s=1: the solution is (J_col . f) / ||J_col||^2 at the selected index.
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let sys = random_system(&mut rng, 15, 6);
    let idx = 4;
    let sel = SparseSelector::from_indices(vec![idx], 6).unwrap();
    let x = solve_sparse(&sys, &sel, 1e-8).unwrap();
    let col = sys.jacobian.column(idx);
    let num: f64 = col.iter().zip(&sys.rhs).map(|(a, b)| a * b).sum();
    let den: f64 = col.iter().map(|a| a * a).sum();
    assert_relative_eq!(x[idx], num / den, epsilon = 1e-12);
    for (j, v) in x.iter().enumerate() {
        if j != idx {
            assert_eq!(*v, 0.0);
        }
    }
}

#[test]
fn selector_chi_square_uniformity() {
    // 1e5 draws over p = 10; chi-square with 9 dof, significance 0.001
    // (critical value 27.877).
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let p = 10;
    let draws = 100_000;
    let mut counts = vec![0usize; p];
    let sel = draw_selector(p, 1, &mut rng).unwrap();
    counts[sel.indices()[0]] += 1;
    for _ in 1..draws {
        let sel = draw_selector(p, 1, &mut rng).unwrap();
        counts[sel.indices()[0]] += 1;
    }
    let expected = draws as f64 / p as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    assert!(chi2 < 27.877, "chi-square statistic {chi2} rejects uniformity");
}

#[test]
fn selector_determinism_and_edge_cases() {
    let mut a = ChaCha8Rng::seed_from_u64(5);
    let mut b = ChaCha8Rng::seed_from_u64(5);
    let sa = draw_selector(100, 7, &mut a).unwrap();
    let sb = draw_selector(100, 7, &mut b).unwrap();
    assert_eq!(sa, sb);
    // fresh draw per call
    let sc = draw_selector(100, 7, &mut a).unwrap();
    assert_ne!(sa, sc);

    // p = 1: all indices 0
    let s = draw_selector(1, 1, &mut a).unwrap();
    assert_eq!(s.indices(), &[0]);

    assert!(draw_selector(10, 0, &mut a).is_err());
    assert!(draw_selector(10, 11, &mut a).is_err());
}

#[test]
fn euler_step_arithmetic() {
    let theta = FlatParams::new(vec![1.0, 2.0]);
    let next = step_euler(&theta, &[10.0, -10.0], 0.1);
    assert_eq!(next.values(), &[2.0, 1.0]);
    let same = step_euler(&theta, &[0.0, 0.0], 0.1);
    assert_eq!(same.values(), theta.values());
    let same = step_euler(&theta, &[10.0, -10.0], 0.0);
    assert_eq!(same.values(), theta.values());
}

#[test]
fn rk4_matches_exponential_taylor_polynomial() {
    // theta_dot = lambda theta: one step must reproduce the degree-4
    // Taylor polynomial of exp(lambda dt).
    let lambda = -0.7;
    let dt = 0.3;
    let next = rk4_step(&[1.0], 0.0, dt, |th, _t| {
        Ok::<_, std::convert::Infallible>(vec![lambda * th[0]])
    })
    .unwrap();
    let x = lambda * dt;
    let taylor = 1.0 + x + x * x / 2.0 + x * x * x / 6.0 + x * x * x * x / 24.0;
    assert!((next[0] - taylor).abs() <= 1e-14, "{} vs {taylor}", next[0]);
}

#[test]
fn rk4_observed_order_on_linear_surrogate() {
    let lambda = 1.3;
    let t_end = 1.0;
    let run = |dt: f64| {
        let mut y = vec![1.0];
        let steps = (t_end / dt).round() as usize;
        for k in 0..steps {
            y = rk4_step(&y, k as f64 * dt, dt, |th, _| {
                Ok::<_, std::convert::Infallible>(vec![lambda * th[0]])
            })
            .unwrap();
        }
        y[0]
    };
    let exact = (lambda * t_end).exp();
    let e1 = (run(0.1) - exact).abs();
    let e2 = (run(0.05) - exact).abs();
    let order = (e1 / e2).log2();
    assert!(order >= 3.5, "observed order {order}");
}

fn equilibrium_setup() -> (PdeProblem, NetworkArch, EmbeddingSpec, FlatParams, LatentCode) {
    // Network fitting u = 1 exactly: zero weights, output bias 1.
    let problem = PdeProblem::allen_cahn_1d(false, 0.0).unwrap();
    let arch = NetworkArch::new(2 + 3, vec![8], 1).unwrap();
    let emb = problem.embedding.clone();
    let mut theta = FlatParams::zeros(&arch);
    let out_block = arch.layer_blocks().pop().unwrap();
    theta.values_mut()[out_block.biases.start] = 1.0;
    (problem, arch, emb, theta, LatentCode::zeros(3))
}

#[test]
fn assemble_zero_field_allen_cahn_rhs_is_zero() {
    // zero network on AC: u = 0 everywhere is an equilibrium
    let problem = PdeProblem::allen_cahn_1d(false, 0.0).unwrap();
    let arch = NetworkArch::new(2 + 3, vec![8], 1).unwrap();
    let theta = FlatParams::zeros(&arch);
    let z = LatentCode::zeros(3);
    let points = uniform_grid(&problem.domain, 17);
    let sys = assemble(&problem, &arch, &theta, &problem.embedding, &z, 0.0, &points).unwrap();
    assert!(sys.rhs.iter().all(|&v| v == 0.0));

    // two identical points give two identical rows
    let pts = vec![vec![0.25], vec![0.25]];
    let sys = assemble(&problem, &arch, &theta, &problem.embedding, &z, 0.0, &pts).unwrap();
    assert_eq!(sys.jacobian.row(0), sys.jacobian.row(1));
}

#[test]
fn assemble_single_param_matches_finite_difference() {
    // One trainable view: 1x1 Jacobian equals the finite-difference slope
    // of U in that parameter.
    let problem = PdeProblem::allen_cahn_1d(false, 0.0).unwrap();
    let arch = NetworkArch::new(2 + 1, vec![2], 1).unwrap();
    let emb = problem.embedding.clone();
    let z = LatentCode::zeros(1);
    let theta = init_params(&arch, 3);
    let pts = vec![vec![0.3]];
    let sys = assemble(&problem, &arch, &theta, &emb, &z, 0.0, &pts).unwrap();
    let h = 1e-6;
    for k in 0..arch.param_count() {
        let mut plus = theta.clone();
        plus.values_mut()[k] += h;
        let mut minus = theta.clone();
        minus.values_mut()[k] -= h;
        let fd = (crate::net::forward(&arch, &plus, &emb, &z, &pts[0]).unwrap()
            - crate::net::forward(&arch, &minus, &emb, &z, &pts[0]).unwrap())
            / (2.0 * h);
        assert!(
            (sys.jacobian[[0, k]] - fd).abs() <= 1e-7 * (1.0 + fd.abs()),
            "param {k}"
        );
    }
}

#[test]
fn assemble_reports_blowup_with_point_index() {
    let problem = PdeProblem::allen_cahn_1d(false, 0.0).unwrap();
    let arch = NetworkArch::new(2 + 1, vec![4], 1).unwrap();
    let mut theta = init_params(&arch, 1);
    theta.values_mut()[0] = f64::NAN;
    let z = LatentCode::zeros(1);
    let pts = vec![vec![0.25], vec![0.5]];
    let err = assemble(&problem, &arch, &theta, &problem.embedding, &z, 0.0, &pts).unwrap_err();
    assert!(matches!(err, GalerkinError::NumericalBlowup { point: 0 }));
}

#[test]
fn rk4_step_leaves_theta_unchanged_on_zero_rhs() {
    // zero network on the reaction problem: f = 0 at every stage, so the
    // minimum-norm update is exactly zero
    let problem = PdeProblem::allen_cahn_1d(false, 0.0).unwrap();
    let arch = NetworkArch::new(2 + 2, vec![6], 1).unwrap();
    let theta = FlatParams::zeros(&arch);
    let z = LatentCode::zeros(2);
    let points = uniform_grid(&problem.domain, 17);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let next = step_rk4(
        &problem,
        &arch,
        &problem.embedding,
        &z,
        &theta,
        0.0,
        1e-3,
        UpdateMode::Full,
        &points,
        LeastSquaresMethod::TruncatedSvd { tau: 1e-8 },
        &mut rng,
    )
    .unwrap();
    assert_eq!(next, theta);
}

#[test]
fn evolve_zero_steps_returns_initial_state_only() {
    let (problem, arch, emb, theta, z) = equilibrium_setup();
    let config = EvolutionConfig {
        stepper: Stepper::ForwardEuler,
        dt: 1e-3,
        n_steps: 0,
        update_mode: UpdateMode::Full,
        quadrature: Quadrature::FixedUniformGrid { n_pts: 17 },
        least_squares: LeastSquaresMethod::TruncatedSvd { tau: 1e-8 },
        selector_seed: 0,
    };
    let traj = evolve(&problem, &arch, &emb, theta.clone(), &z, &config).unwrap();
    assert_eq!(traj.thetas.len(), 1);
    assert_eq!(traj.times, vec![0.0]);
    assert_eq!(traj.thetas[0], theta);
}

#[test]
fn evolve_preserves_allen_cahn_equilibrium() {
    // theta fits u = 1 exactly; the field must stay there.
    let (problem, arch, emb, theta, z) = equilibrium_setup();
    let config = EvolutionConfig {
        stepper: Stepper::ForwardEuler,
        dt: 1e-3,
        n_steps: 100,
        update_mode: UpdateMode::Full,
        quadrature: Quadrature::FixedUniformGrid { n_pts: 33 },
        least_squares: LeastSquaresMethod::TruncatedSvd { tau: 1e-8 },
        selector_seed: 0,
    };
    let traj = evolve(&problem, &arch, &emb, theta, &z, &config).unwrap();
    let grid = uniform_grid(&problem.domain, 65);
    let mut worst = 0.0f64;
    for th in &traj.thetas {
        for x in &grid {
            let u = crate::net::forward(&arch, th, &emb, &z, x).unwrap();
            worst = worst.max((u - 1.0).abs());
        }
    }
    assert!(worst <= 1e-6, "equilibrium drift {worst}");
    // z bitwise constant
    assert_eq!(traj.z, z);
}

#[test]
fn evolve_sparse_full_range_selector_matches_full_mode() {
    // s = p with every index selected once reproduces the full update.
    let (problem, arch, emb, _, z) = equilibrium_setup();
    let theta = init_params(&arch, 12);
    let p = arch.param_count();
    let base = EvolutionConfig {
        stepper: Stepper::ForwardEuler,
        dt: 1e-3,
        n_steps: 10,
        update_mode: UpdateMode::Full,
        quadrature: Quadrature::FixedUniformGrid { n_pts: 33 },
        least_squares: LeastSquaresMethod::TruncatedSvd { tau: 1e-8 },
        selector_seed: 0,
    };
    let full = evolve(&problem, &arch, &emb, theta.clone(), &z, &base).unwrap();

    // drive the sparse path manually with the identity selector
    let points = uniform_grid(&problem.domain, 33);
    let sel = SparseSelector::from_indices((0..p).collect(), p).unwrap();
    let mut th = theta;
    let mut sparse_thetas = vec![th.clone()];
    for k in 0..10 {
        let sys = assemble(&problem, &arch, &th, &emb, &z, k as f64 * 1e-3, &points).unwrap();
        let dot = solve_sparse(&sys, &sel, 1e-8).unwrap();
        th = step_euler(&th, &dot, 1e-3);
        sparse_thetas.push(th.clone());
    }
    for (a, b) in full.thetas.iter().zip(&sparse_thetas) {
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-8, "{x} vs {y}");
        }
    }
}

#[test]
fn evolve_is_bitwise_reproducible() {
    let (problem, arch, emb, _, z) = equilibrium_setup();
    let theta = init_params(&arch, 7);
    let config = EvolutionConfig {
        stepper: Stepper::Rk4,
        dt: 1e-3,
        n_steps: 5,
        update_mode: UpdateMode::Sparse { width: 11 },
        quadrature: Quadrature::ResampledUniform { n_pts: 29, seed: 3 },
        least_squares: LeastSquaresMethod::TruncatedSvd { tau: 1e-8 },
        selector_seed: 9,
    };
    let a = evolve(&problem, &arch, &emb, theta.clone(), &z, &config).unwrap();
    let b = evolve(&problem, &arch, &emb, theta, &z, &config).unwrap();
    assert_eq!(a.thetas, b.thetas);
    assert_eq!(a.times, b.times);
    assert_eq!(a.z, b.z);
}

#[test]
fn invalid_config_rejected_before_compute() {
    let (problem, arch, emb, theta, z) = equilibrium_setup();
    let p = arch.param_count();
    let config = EvolutionConfig {
        stepper: Stepper::ForwardEuler,
        dt: 1e-3,
        n_steps: 3,
        update_mode: UpdateMode::Sparse { width: p + 1 },
        quadrature: Quadrature::FixedUniformGrid { n_pts: 17 },
        least_squares: LeastSquaresMethod::TruncatedSvd { tau: 1e-8 },
        selector_seed: 0,
    };
    let err = evolve(&problem, &arch, &emb, theta, &z, &config).unwrap_err();
    assert_eq!(err.step, 0);
    assert!(matches!(err.source, GalerkinError::Config(_)));
}
