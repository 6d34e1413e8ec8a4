use koopman_turbine::surrogate::{
    equilibrium, integrate, integrate_with, nominal_inputs, rotor_acceleration, ExcitationSpec, InputSignal,
    IntegrateOptions, LoadProfile, PlantInputs, PlantParams, PlantState, SignalKind,
};
use koopman_turbine::TimeSeriesDataset;

fn stepped_excitation(params: &PlantParams, seed: u64) -> ExcitationSpec {
    ExcitationSpec {
        load: LoadProfile {
            min_hold_s: 2.0,
            max_hold_s: 5.0,
            ramp_s: 0.5,
            levels: None,
        },
        signals: params
            .input_ranges
            .iter()
            .map(|&(low, high)| InputSignal {
                kind: SignalKind::Steps {
                    min_hold_s: 1.0,
                    max_hold_s: 3.0,
                },
                low,
                high,
                load_weight: 0.5,
            })
            .collect(),
        seed,
    }
}

fn rms_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Relative imbalance of power and of enthalpy at a computed equilibrium.
fn balance_residuals(p: &PlantParams, u: &PlantInputs, s: &PlantState) -> (f64, f64) {
    let t = p.terms(s.n_t, u);
    let power = (t.turbine_power - t.compressor_power - t.friction_torque * t.omega).abs() / t.turbine_power;
    let enthalpy_in = t.mass_flow * p.c_p * u.t_tur_in;
    let enthalpy_out = t.mass_flow * p.c_p * s.t_tur_out + t.torque * t.omega - t.housing_heat;
    (power, (enthalpy_in - enthalpy_out).abs() / enthalpy_in)
}

#[test]
fn equilibria_balance_power_and_enthalpy() {
    let p = PlantParams::default();
    for corner in 0..16u32 {
        let mut v = nominal_inputs(&p).to_array();
        for (i, &(lo, hi)) in p.input_ranges.iter().enumerate().take(4) {
            v[i] = if corner >> i & 1 == 1 { 0.8 * hi + 0.2 * lo } else { 0.8 * lo + 0.2 * hi };
        }
        let u = PlantInputs::from_array(v);
        let s = equilibrium(&p, &u).unwrap();
        let (power, enthalpy) = balance_residuals(&p, &u, &s);
        assert!(power < 1e-6, "corner {corner}: power residual {power}");
        assert!(enthalpy < 1e-6, "corner {corner}: enthalpy residual {enthalpy}");
    }
}

#[test]
fn doubled_inertia_halves_acceleration_exactly() {
    for (pt, pc, fr, w) in [(40e3, 31e3, 0.05, 9e3), (12e3, 15e3, 0.01, 4e3), (1.0, 0.25, 1e-5, 100.0)] {
        let a1 = rotor_acceleration(2e-4, pt, pc, fr, w);
        let a2 = rotor_acceleration(4e-4, pt, pc, fr, w);
        assert_eq!(a2, a1 / 2.0);
    }
}

/// Integrates the same 6 s record with `substeps` RK4 steps per 0.5 s sample.
fn coarse_run(p: &PlantParams, substeps: usize) -> Vec<f64> {
    let start = PlantState {
        n_t: 70_000.0,
        t_tur_out: 650.0,
    };
    let opts = IntegrateOptions {
        substeps,
        initial_state: Some(start),
        ..Default::default()
    };
    let d = integrate_with(p, &stepped_excitation(p, 3), 6.0, 2.0, 0, &opts).unwrap();
    let mut v = d.values("N_t").unwrap().to_vec();
    v.extend(d.values("T_tur_out").unwrap());
    v
}

#[test]
fn rk4_converges_at_fourth_order() {
    let p = PlantParams::default();
    let reference = coarse_run(&p, 1024);
    let steps = [8usize, 16, 32];
    let errors: Vec<f64> = steps.iter().map(|&s| max_abs_diff(&coarse_run(&p, s), &reference)).collect();
    // least-squares slope of log(error) against log(step size)
    let xs: Vec<f64> = steps.iter().map(|&s| (1.0 / s as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((3.7..=4.3).contains(&slope), "slope {slope}, errors {errors:?}");
}

#[test]
fn halving_the_step_changes_little_at_100_hz() {
    let p = PlantParams::default();
    let e = stepped_excitation(&p, 9);
    let run = |substeps| {
        let opts = IntegrateOptions {
            substeps,
            ..Default::default()
        };
        integrate_with(&p, &e, 30.0, 100.0, 0, &opts).unwrap()
    };
    let (a, b) = (run(4), run(8));
    for ch in ["N_t", "T_tur_out"] {
        let r = rms_rel_diff(a.values(ch).unwrap(), b.values(ch).unwrap());
        assert!(r < 1e-6, "{ch}: {r}");
    }
}

#[test]
fn ten_minute_runs_stay_bounded() {
    let p = PlantParams::default();
    for seed in 0..3 {
        let d = integrate(&p, &stepped_excitation(&p, seed), 600.0, 100.0, seed).unwrap();
        let n = d.values("N_t").unwrap();
        let t = d.values("T_tur_out").unwrap();
        assert!(n.iter().all(|v| v.is_finite() && *v > p.speed_floor() && *v < p.rated_speed * 1.5));
        assert!(t.iter().all(|v| v.is_finite() && *v > 300.0 && *v < 1200.0));
    }
}

#[test]
fn same_seed_same_record() {
    let p = PlantParams::default();
    let e = stepped_excitation(&p, 5);
    assert_eq!(integrate(&p, &e, 20.0, 100.0, 1).unwrap(), integrate(&p, &e, 20.0, 100.0, 1).unwrap());
}

#[test]
fn export_then_ingest_is_bit_identical() {
    let p = PlantParams::default();
    let d = integrate(&p, &stepped_excitation(&p, 4), 60.0, 100.0, 0).unwrap();
    assert_eq!(d.len(), 6000);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("surrogate.csv");
    d.write_csv(&path).unwrap();
    let back = TimeSeriesDataset::read_csv(&path).unwrap();
    assert_eq!(back.sample_rate(), 100.0);
    for ch in d.channels() {
        let other = back.channel(&ch.name).unwrap();
        assert_eq!(other.unit, ch.unit);
        assert!(ch.values.iter().zip(&other.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
