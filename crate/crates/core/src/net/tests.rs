use super::*;
use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_latent(rng: &mut ChaCha8Rng, n: usize) -> LatentCode {
    LatentCode::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn rand_params(rng: &mut ChaCha8Rng, arch: &NetworkArch) -> FlatParams {
    FlatParams::new(
        (0..arch.param_count())
            .map(|_| rng.gen_range(-0.8..0.8))
            .collect(),
    )
}

/// |a - b| / (1 + |b|): absolute for small values, relative for large ones.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

#[test]
fn param_count_matches_block_enumeration() {
    // 3 -> 20 -> 1: p = (3+1)*20 + (20+1)*1 = 101.
    let arch = NetworkArch::new(3, vec![20], 1).unwrap();
    assert_eq!(arch.param_count(), 101);
    let enumerated: usize = arch
        .layer_blocks()
        .iter()
        .map(|b| b.weights.len() + b.biases.len())
        .sum();
    assert_eq!(enumerated, 101);
    let last = arch.layer_blocks().last().unwrap().biases.end;
    assert_eq!(last, 101);
}

#[test]
fn init_zero_biases_and_deterministic() {
    let arch = NetworkArch::new(1, vec![], 1).unwrap();
    let p = init_params(&arch, 99);
    // single 1 -> 1 layer: [w, b]; bias exactly zero
    assert_eq!(p.len(), 2);
    assert_eq!(p.values()[1], 0.0);

    let arch = NetworkArch::new(7, vec![20], 1).unwrap();
    let a = init_params(&arch, 42);
    let b = init_params(&arch, 42);
    assert_eq!(a, b);
    let c = init_params(&arch, 43);
    assert_ne!(a, c);
    for block in arch.layer_blocks() {
        let bound = (6.0 / (block.in_dim + block.out_dim) as f64).sqrt();
        assert!(a.values()[block.weights].iter().all(|w| w.abs() <= bound));
        assert!(a.values()[block.biases].iter().all(|&b| b == 0.0));
    }
}

#[test]
fn forward_zero_network_is_zero() {
    let arch = NetworkArch::new(7, vec![20], 1).unwrap();
    let emb = EmbeddingSpec::Periodic1D { half_width: 1.0 };
    let params = FlatParams::zeros(&arch);
    let z = LatentCode::new(vec![0.3, -0.2, 0.1, 0.0, 0.9]);
    for &x in &[-0.9, 0.0, 0.543] {
        assert_eq!(forward(&arch, &params, &emb, &z, &[x]).unwrap(), 0.0);
    }
}

#[test]
fn forward_matches_hand_evaluation() {
    // 2 inputs -> 2 tanh units -> 1 linear output, identity embedding,
    // evaluated independently with scalar arithmetic.
    let arch = NetworkArch::new(2, vec![2], 1).unwrap();
    let emb = EmbeddingSpec::Identity { dim: 2 };
    let w1 = [[0.5, -1.25], [2.0, 0.75]];
    let b1 = [0.1, -0.2];
    let w2 = [1.5, -0.5];
    let b2 = 0.25;
    let params = FlatParams::flatten(
        &arch,
        &[
            (vec![w1[0][0], w1[0][1], w1[1][0], w1[1][1]], b1.to_vec()),
            (vec![w2[0], w2[1]], vec![b2]),
        ],
    )
    .unwrap();
    let x = [0.3, -0.7];
    let z = LatentCode::new(vec![]);
    let h0 = (w1[0][0] * x[0] + w1[0][1] * x[1] + b1[0]).tanh();
    let h1 = (w1[1][0] * x[0] + w1[1][1] * x[1] + b1[1]).tanh();
    let expected = w2[0] * h0 + w2[1] * h1 + b2;
    let got = forward(&arch, &params, &emb, &z, &x).unwrap();
    assert!((got - expected).abs() <= 1e-15, "got {got}, want {expected}");
}

#[test]
fn forward_is_exactly_periodic_at_representable_shifts() {
    // L = 1: period 2. Dyadic x keeps x + 2 exactly representable, so the
    // reduced arguments coincide bit for bit.
    let arch = NetworkArch::new(4, vec![8], 1).unwrap();
    let emb = EmbeddingSpec::Periodic1D { half_width: 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = rand_params(&mut rng, &arch);
    let z = rand_latent(&mut rng, 2);
    for i in 0..32 {
        let x = -1.0 + (i as f64) * 0.0625; // dyadic grid, x + 2 exact
        let a = forward(&arch, &params, &emb, &z, &[x]).unwrap();
        let b = forward(&arch, &params, &emb, &z, &[x + 2.0]).unwrap();
        assert_eq!(a, b, "periodicity violated at x = {x}");
    }
}

#[test]
fn shifted_embedding_periodic_at_declared_period() {
    // shift 0.125 gives the dyadic trig period 2 (1 + 2 shift) = 2.5
    let emb = EmbeddingSpec::ShiftedPeriodic1D { shift: 0.125 };
    let period = emb.period(0).unwrap();
    assert_eq!(period, 2.5);
    let arch = NetworkArch::new(4, vec![6], 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let params = rand_params(&mut rng, &arch);
    let z = rand_latent(&mut rng, 2);
    for i in 0..20 {
        let x = -0.125 + (i as f64) * 0.0625;
        let a = forward(&arch, &params, &emb, &z, &[x]).unwrap();
        let b = forward(&arch, &params, &emb, &z, &[x + period]).unwrap();
        assert_eq!(a, b, "declared-period shift broke at x = {x}");
    }
}

#[test]
fn forward_linear_in_last_layer_weights() {
    // Superposition over two settings of the output layer.
    let arch = NetworkArch::new(3, vec![6], 1).unwrap();
    let emb = EmbeddingSpec::Periodic1D { half_width: 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let base = rand_params(&mut rng, &arch);
    let z = rand_latent(&mut rng, 1);
    let x = [0.37];

    let block = arch.layer_blocks().pop().unwrap();
    let mut pa = base.clone();
    let mut pb = base.clone();
    let mut pc = base.clone();
    let wa: Vec<f64> = (0..block.weights.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let wb: Vec<f64> = (0..block.weights.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    pa.values_mut()[block.weights.clone()].copy_from_slice(&wa);
    pb.values_mut()[block.weights.clone()].copy_from_slice(&wb);
    for (i, slot) in pc.values_mut()[block.weights.clone()].iter_mut().enumerate() {
        *slot = 2.0 * wa[i] - 3.0 * wb[i];
    }
    let bias = base.values()[block.biases.clone()][0];
    let fa = forward(&arch, &pa, &emb, &z, &x).unwrap();
    let fb = forward(&arch, &pb, &emb, &z, &x).unwrap();
    let fc = forward(&arch, &pc, &emb, &z, &x).unwrap();
    let expected = 2.0 * (fa - bias) - 3.0 * (fb - bias) + bias;
    assert_relative_eq!(fc, expected, epsilon = 1e-12);
}

#[test]
fn jacobian_last_layer_columns_are_hidden_activations() {
    let arch = NetworkArch::new(3, vec![5], 1).unwrap();
    let emb = EmbeddingSpec::Periodic1D { half_width: 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let params = rand_params(&mut rng, &arch);
    let z = rand_latent(&mut rng, 1);
    let xs = vec![vec![0.1], vec![-0.6]];
    let jac = param_jacobian(&arch, &params, &emb, &z, &xs).unwrap();

    let blocks = arch.layer_blocks();
    let out_block = &blocks[1];
    for (j, x) in xs.iter().enumerate() {
        // recompute hidden activations by hand
        let mut feat = [0.0; 2];
        emb.embed(x, &mut feat);
        let input = [feat[0], feat[1], z.values()[0]];
        let w1 = &params.values()[blocks[0].weights.clone()];
        let b1 = &params.values()[blocks[0].biases.clone()];
        for i in 0..5 {
            let mut s = b1[i];
            for (k, inp) in input.iter().enumerate() {
                s += w1[i * 3 + k] * inp;
            }
            let h = s.tanh();
            assert_relative_eq!(jac[[j, out_block.weights.start + i]], h, epsilon = 1e-15);
        }
        assert_eq!(jac[[j, out_block.biases.start]], 1.0);
    }
}

#[test]
fn jacobian_matches_central_differences() {
    let cases: &[(usize, Vec<usize>, usize, &EmbeddingSpec)] = &[
        (7, vec![20], 5, &EmbeddingSpec::Periodic1D { half_width: 1.0 }),
        (5, vec![8, 8], 3, &EmbeddingSpec::ShiftedPeriodic1D { shift: 0.15 }),
        (6, vec![10], 2, &EmbeddingSpec::Periodic2D),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for (input_dim, hidden, n_latent, emb) in cases {
        let arch = NetworkArch::new(*input_dim, hidden.clone(), 1).unwrap();
        let params = rand_params(&mut rng, &arch);
        let z = rand_latent(&mut rng, *n_latent);
        let dim = emb.spatial_dim();
        let xs: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect())
            .collect();
        let jac = param_jacobian(&arch, &params, emb, &z, &xs).unwrap();
        let h = 1e-5;
        for (j, x) in xs.iter().enumerate() {
            for k in 0..arch.param_count() {
                let mut plus = params.clone();
                plus.values_mut()[k] += h;
                let mut minus = params.clone();
                minus.values_mut()[k] -= h;
                let fd = (forward(&arch, &plus, emb, &z, x).unwrap()
                    - forward(&arch, &minus, emb, &z, x).unwrap())
                    / (2.0 * h);
                assert!(
                    rel_err(fd, jac[[j, k]]) <= 1e-6,
                    "row {j} param {k}: fd {fd} vs jac {}",
                    jac[[j, k]]
                );
            }
        }
    }
}

#[test]
fn jacobian_is_bitwise_deterministic() {
    let arch = NetworkArch::new(7, vec![20], 1).unwrap();
    let emb = EmbeddingSpec::Periodic1D { half_width: 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params = rand_params(&mut rng, &arch);
    let z = rand_latent(&mut rng, 5);
    let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![-1.0 + i as f64 / 20.0]).collect();
    let a = param_jacobian(&arch, &params, &emb, &z, &xs).unwrap();
    let b = param_jacobian(&arch, &params, &emb, &z, &xs).unwrap();
    assert_eq!(a, b);
}

#[test]
fn spatial_jet_zero_network() {
    let arch = NetworkArch::new(7, vec![4], 1).unwrap();
    let emb = EmbeddingSpec::Periodic1D { half_width: 1.0 };
    let params = FlatParams::zeros(&arch);
    let z = LatentCode::zeros(5);
    let jet = spatial_jet(&arch, &params, &emb, &z, &[0.3], 3).unwrap();
    assert_eq!(jet.u, 0.0);
    assert_eq!(jet.d1(0), 0.0);
    assert_eq!(jet.d2(0), Some(0.0));
    assert_eq!(jet.d3(), Some(0.0));
}

/// 4th-order central stencils used as the independent oracle.
fn fd_derivs(f: impl Fn(f64) -> f64, x: f64, h: f64) -> (f64, f64, f64) {
    let fm3 = f(x - 3.0 * h);
    let fm2 = f(x - 2.0 * h);
    let fm1 = f(x - h);
    let f0 = f(x);
    let fp1 = f(x + h);
    let fp2 = f(x + 2.0 * h);
    let fp3 = f(x + 3.0 * h);
    let d1 = (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * h);
    let d2 = (-fp2 + 16.0 * fp1 - 30.0 * f0 + 16.0 * fm1 - fm2) / (12.0 * h * h);
    let d3 = (fm3 - fp3 + 8.0 * (fp2 - fm2) - 13.0 * (fp1 - fm1)) / (8.0 * h * h * h);
    (d1, d2, d3)
}

#[test]
fn spatial_jet_matches_finite_differences_1d() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..6 {
        let emb: EmbeddingSpec = if case % 2 == 0 {
            EmbeddingSpec::Periodic1D { half_width: 1.0 }
        } else {
            EmbeddingSpec::ShiftedPeriodic1D { shift: 0.12 }
        };
        let n_latent = 1 + case % 3;
        let arch = NetworkArch::new(2 + n_latent, vec![10], 1).unwrap();
        let params = rand_params(&mut rng, &arch);
        let z = rand_latent(&mut rng, n_latent);
        let x0 = rng.gen_range(-0.4..0.4);
        let jet = spatial_jet(&arch, &params, &emb, &z, &[x0], 3).unwrap();
        let f = |x: f64| forward(&arch, &params, &emb, &z, &[x]).unwrap();
        let (d1, d2, d3) = fd_derivs(f, x0, 1e-3);
        assert!(rel_err(d1, jet.d1(0)) <= 1e-5, "d1: {d1} vs {}", jet.d1(0));
        assert!(
            rel_err(d2, jet.d2(0).unwrap()) <= 1e-5,
            "d2: {d2} vs {:?}",
            jet.d2(0)
        );
        assert!(
            rel_err(d3, jet.d3().unwrap()) <= 1e-5,
            "d3: {d3} vs {:?}",
            jet.d3()
        );
    }
}

#[test]
fn spatial_jet_matches_finite_differences_2d() {
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    let emb = EmbeddingSpec::Periodic2D;
    let arch = NetworkArch::new(4 + 3, vec![9], 1).unwrap();
    for _ in 0..5 {
        let params = rand_params(&mut rng, &arch);
        let z = rand_latent(&mut rng, 3);
        let x0 = rng.gen_range(0.1..0.9);
        let y0 = rng.gen_range(0.1..0.9);
        let jet = spatial_jet(&arch, &params, &emb, &z, &[x0, y0], 2).unwrap();
        let fx = |x: f64| forward(&arch, &params, &emb, &z, &[x, y0]).unwrap();
        let fy = |y: f64| forward(&arch, &params, &emb, &z, &[x0, y]).unwrap();
        let (d1x, d2x, _) = fd_derivs(fx, x0, 1e-3);
        let (d1y, d2y, _) = fd_derivs(fy, y0, 1e-3);
        assert!(rel_err(d1x, jet.d1(0)) <= 1e-5);
        assert!(rel_err(d1y, jet.d1(1)) <= 1e-5);
        assert!(rel_err(d2x, jet.d2(0).unwrap()) <= 1e-5);
        assert!(rel_err(d2y, jet.d2(1).unwrap()) <= 1e-5);
        assert!(
            rel_err(d2x + d2y, jet.laplacian().unwrap()) <= 1e-5,
            "laplacian mismatch"
        );
    }
}

#[test]
fn spatial_jet_periodic_shift_matches() {
    let arch = NetworkArch::new(4, vec![8], 1).unwrap();
    let emb = EmbeddingSpec::Periodic1D { half_width: 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    let params = rand_params(&mut rng, &arch);
    let z = rand_latent(&mut rng, 2);
    for i in 0..20 {
        let x = -1.0 + 0.09375 * i as f64; // dyadic
        let a = spatial_jet(&arch, &params, &emb, &z, &[x], 3).unwrap();
        let b = spatial_jet(&arch, &params, &emb, &z, &[x + 2.0], 3).unwrap();
        assert!((a.u - b.u).abs() <= 1e-12);
        assert!((a.d1(0) - b.d1(0)).abs() <= 1e-12);
        assert!((a.d2(0).unwrap() - b.d2(0).unwrap()).abs() <= 1e-12);
        assert!((a.d3().unwrap() - b.d3().unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn third_order_in_2d_is_rejected() {
    let arch = NetworkArch::new(7, vec![4], 1).unwrap();
    let emb = EmbeddingSpec::Periodic2D;
    let params = FlatParams::zeros(&arch);
    let z = LatentCode::zeros(3);
    let err = spatial_jet(&arch, &params, &emb, &z, &[0.5, 0.5], 3).unwrap_err();
    assert!(matches!(err, NetError::UnsupportedOrder { order: 3, dim: 2 }));
}

#[test]
fn dimension_mismatch_is_a_configuration_error() {
    let arch = NetworkArch::new(7, vec![4], 1).unwrap();
    let emb = EmbeddingSpec::Periodic1D { half_width: 1.0 };
    let params = FlatParams::zeros(&arch);
    // latent dim 4: embedding 2 + 4 = 6 != 7
    let z = LatentCode::zeros(4);
    let err = forward(&arch, &params, &emb, &z, &[0.0]).unwrap_err();
    assert!(matches!(err, NetError::DimensionMismatch { .. }));
}

#[test]
fn flatten_unflatten_roundtrip() {
    let arch = NetworkArch::new(5, vec![7, 3], 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = rand_params(&mut rng, &arch);
    let layers = params.unflatten(&arch).unwrap();
    let back = FlatParams::flatten(&arch, &layers).unwrap();
    assert_eq!(params, back);
}
