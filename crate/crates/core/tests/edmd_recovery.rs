use koopman_turbine::dictionary::{DictionaryFamily, DictionarySpec, DEFAULT_CENTER_BOUNDS};
use koopman_turbine::edmd::{build_snapshots, fit};
use koopman_turbine::surrogate::{make_duty_cycles, input_names, state_names, PlantParams};
use koopman_turbine::{Channel, ChannelRole, Matrix, TimeSeriesDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct LinearSystem {
    a: Matrix,
    b: Matrix,
}

/// Random 2-state, 2-input system with spectral radius at most 0.9 and a
/// well-conditioned input matrix.
fn random_system(rng: &mut ChaCha8Rng) -> LinearSystem {
    loop {
        let a = Matrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let b = Matrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let rho = a.complex_eigenvalues().iter().map(|e| e.norm()).fold(0.0, f64::max);
        if rho < 0.9 && b.determinant().abs() > 0.2 {
            return LinearSystem { a, b };
        }
    }
}

fn rollout(sys: &LinearSystem, x0: [f64; 2], u: &Matrix) -> Matrix {
    let n = u.ncols();
    let mut x = Matrix::zeros(2, n);
    x[(0, 0)] = x0[0];
    x[(1, 0)] = x0[1];
    for l in 0..n - 1 {
        let next = &sys.a * x.column(l) + &sys.b * u.column(l);
        x.set_column(l + 1, &next);
    }
    x
}

/// Trajectory of `len` samples shifted to zero mean. Shifting the state by
/// its mean `m` is absorbed by the input offset `B⁻¹(A - I) m`, so the
/// shifted record still obeys the same dynamics.
fn centered_record(sys: &LinearSystem, len: usize, rng: &mut ChaCha8Rng) -> (Matrix, Matrix) {
    let u = Matrix::from_fn(2, len, |_, _| rng.gen_range(-1.0..1.0));
    let x = rollout(sys, [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)], &u);
    let m = x.column_mean();
    let offset = sys.b.clone().try_inverse().unwrap() * (&sys.a - Matrix::identity(2, 2)) * &m;
    let u_shift = Matrix::from_fn(2, len, |i, j| u[(i, j)] + offset[i]);
    let x_shift = rollout(sys, [x[(0, 0)] - m[0], x[(1, 0)] - m[1]], &u_shift);
    (x_shift, u_shift)
}

fn dataset(x: &Matrix, u: &Matrix) -> TimeSeriesDataset {
    let row = |m: &Matrix, i: usize| m.row(i).iter().copied().collect::<Vec<_>>();
    TimeSeriesDataset::new(
        "linear",
        1.0,
        vec![
            Channel::new("x1", "", ChannelRole::State, row(x, 0)),
            Channel::new("x2", "", ChannelRole::State, row(x, 1)),
            Channel::new("u1", "", ChannelRole::Input, row(u, 0)),
            Channel::new("u2", "", ChannelRole::Input, row(u, 1)),
        ],
    )
    .unwrap()
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn identity_dictionary_recovers_random_linear_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..10 {
        let sys = random_system(&mut rng);
        let (x, u) = centered_record(&sys, 500, &mut rng);
        let s = build_snapshots(&[dataset(&x, &u)], &names(&["x1", "x2"]), &names(&["u1", "u2"])).unwrap();
        let model = fit(&s, &DictionarySpec::identity(2), 0.0).unwrap();
        // undo the z-scoring: A = S Â S⁻¹, B = S B̂
        let scale = Matrix::from_diagonal(&s.stats.std.clone().into());
        let inv = scale.clone().try_inverse().unwrap();
        let a = &scale * &model.a * &inv;
        let b = &scale * &model.b;
        assert!((a - &sys.a).amax() < 1e-7, "trial {trial}");
        assert!((b - &sys.b).amax() < 1e-7, "trial {trial}");

        // held-out rollout from a fresh input sequence
        let u_test = Matrix::from_fn(2, 100, |_, _| rng.gen_range(-1.0..1.0));
        let truth = rollout(&sys, [0.3, -0.2], &u_test);
        let pred = model.simulate(&[0.3, -0.2], &u_test).unwrap();
        let rel = (&pred - &truth).norm() / truth.norm();
        assert!(rel < 1e-5, "trial {trial}: relative error {rel}");
    }
}

#[test]
fn residual_never_grows_with_nested_dictionaries() {
    let cycles = make_duty_cycles(&PlantParams::default(), 5).unwrap();
    let s = build_snapshots(&cycles.train[..1], &state_names(), &input_names()).unwrap();
    let mut previous = f64::INFINITY;
    for n in [0, 25, 50, 100, 150] {
        let dict = DictionarySpec::radial(DictionaryFamily::Polyharmonic, 2, n, DEFAULT_CENTER_BOUNDS, 17, 1.0).unwrap();
        let r = fit(&s, &dict, 0.0).unwrap().one_step_residual(&s).unwrap();
        assert!(r <= previous + 1e-9, "{n} centers: {r} after {previous}");
        previous = r;
    }
}

#[test]
fn rollout_does_not_relift_but_diagnostic_mode_does() {
    let cycles = make_duty_cycles(&PlantParams::default(), 6).unwrap();
    let s = build_snapshots(&cycles.train, &state_names(), &input_names()).unwrap();
    let dict = DictionarySpec::radial(DictionaryFamily::Polyharmonic, 2, 40, DEFAULT_CENTER_BOUNDS, 3, 1.0).unwrap();
    let model = fit(&s, &dict, 0.0).unwrap();
    let test = &cycles.transient_test;
    let u = test.matrix(&input_names()).unwrap().columns(0, 300).into_owned();
    let x0: Vec<f64> = test.matrix(&state_names()).unwrap().column(0).iter().copied().collect();
    let linear = model.simulate(&x0, &u).unwrap();
    let relifted = model.simulate_relifted(&x0, &u).unwrap();
    assert_eq!(linear.column(0), relifted.column(0));
    assert_eq!(linear.column(1), relifted.column(1));
    assert!((linear - relifted).amax() > 0.0);
}
