use nssgan::nn::{init_net, Activation, DenseNet, Matrix, NetSpec};
use nssgan::tensorio::RngStream;

fn random_matrix(s: &mut RngStream, rows: usize, cols: usize, scale: f64) -> Matrix<f64> {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| scale * s.gaussian()).collect(),
    )
    .unwrap()
}

fn rescaled(spec: &NetSpec, seed: u64, scale: f64) -> DenseNet<f64> {
    let mut net: DenseNet<f64> = init_net(spec, &mut RngStream::new(seed, 0)).unwrap();
    let mut s = RngStream::new(seed, 1);
    for p in net.params_mut() {
        for v in p.iter_mut() {
            *v = *v / 0.02 * scale + 0.01 * s.gaussian();
        }
    }
    net
}

// L = (1/B) Σ_b ⟨u_b, f(x_b)⟩, the scalar whose gradient `backward` returns.
fn objective(net: &DenseNet<f64>, x: &Matrix<f64>, u: &Matrix<f64>) -> f64 {
    let (y, _) = net.forward(x).unwrap();
    y.data()
        .iter()
        .zip(u.data())
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / x.rows() as f64
}

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
}

fn max_rel_error(net: &DenseNet<f64>, x: &Matrix<f64>, u: &Matrix<f64>) -> (f64, f64) {
    let h = 1e-4;
    let (_, cache) = net.forward(x).unwrap();
    let (grads, dx) = net.backward(&cache, u).unwrap();
    let analytic = grads.flat();

    let mut worst_param = 0.0f64;
    let mut probe = net.clone();
    let mut k = 0;
    let tensor_count = net.params().count();
    for ti in 0..tensor_count {
        let len = net.params().nth(ti).unwrap().len();
        for j in 0..len {
            let orig = probe.params_mut().nth(ti).unwrap()[j];
            probe.params_mut().nth(ti).unwrap()[j] = orig + h;
            let up = objective(&probe, x, u);
            probe.params_mut().nth(ti).unwrap()[j] = orig - h;
            let down = objective(&probe, x, u);
            probe.params_mut().nth(ti).unwrap()[j] = orig;
            worst_param = worst_param.max(rel(analytic[k], (up - down) / (2.0 * h)));
            k += 1;
        }
    }

    let mut worst_input = 0.0f64;
    let b = x.rows() as f64;
    for idx in 0..x.data().len() {
        let mut xp = x.clone();
        xp.data_mut()[idx] += h;
        let mut xm = x.clone();
        xm.data_mut()[idx] -= h;
        let fd = (objective(net, &xp, u) - objective(net, &xm, u)) / (2.0 * h);
        // input gradient rows are per-sample, the objective averages over B
        worst_input = worst_input.max(rel(dx.data()[idx] / b, fd));
    }
    (worst_param, worst_input)
}

#[test]
fn two_layer_net_matches_finite_differences() {
    for (hidden, out) in [
        (Activation::Tanh, Activation::Identity),
        (Activation::LeakyRelu, Activation::Tanh),
    ] {
        let spec = NetSpec::mlp(&[5, 7, 3], hidden, out);
        let net = rescaled(&spec, 4, 0.5);
        let mut s = RngStream::new(8, 0);
        let x = random_matrix(&mut s, 4, 5, 1.0);
        let u = random_matrix(&mut s, 4, 3, 1.0);
        let (p, i) = max_rel_error(&net, &x, &u);
        assert!(p < 1e-4 && i < 1e-4, "{hidden:?}: param {p:e} input {i:e}");
    }
}

#[test]
fn training_architectures_check_in_f64() {
    // raw init puts hidden pre-activations within h of the leaky kink, so the
    // check runs at a generic point: weights of std 0.25 and non-zero biases
    for (spec, seed) in [(NetSpec::generator(16), 2), (NetSpec::discriminator(), 3)] {
        let net32: DenseNet<f32> = init_net(&spec, &mut RngStream::new(seed, 0)).unwrap();
        let mut net = net32.cast::<f64>();
        assert_eq!(net.param_count(), net32.param_count());
        let mut s = RngStream::new(seed, 1);
        for p in net.params_mut() {
            for v in p.iter_mut() {
                *v = *v * 12.5 + 0.02 * s.gaussian();
            }
        }
        let x = random_matrix(&mut s, 3, spec.input_dim(), 1.0);
        let u = random_matrix(&mut s, 3, spec.output_dim(), 1.0);
        let (p, i) = max_rel_error(&net, &x, &u);
        assert!(p < 1e-4 && i < 1e-4, "param {p:e} input {i:e}");
    }
}
