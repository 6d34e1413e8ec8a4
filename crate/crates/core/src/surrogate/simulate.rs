//! Fixed-step RK4 integration of the surrogate and duty-cycle generation.

use crate::dataset::{Channel, ChannelRole, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SeededStream};

use super::excitation::{ExcitationSpec, InputSignal, LoadProfile, SignalKind};
use super::{equilibrium, plant_derivatives, PlantInputs, PlantParams, PlantState, INPUT_CHANNELS, STATE_CHANNELS};

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrateOptions {
    /// RK4 steps per output sample.
    pub substeps: usize,
    /// Additive Gaussian measurement noise `(N_t [rpm], T_tur_out [K])`.
    pub noise_std: (f64, f64),
    /// Start here instead of at the equilibrium of the first input sample.
    pub initial_state: Option<PlantState>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            substeps: 4,
            noise_std: (0.0, 0.0),
            initial_state: None,
        }
    }
}

fn rk4_step(params: &PlantParams, s: &PlantState, u: &PlantInputs, h: f64) -> Result<PlantState> {
    let add = |s: &PlantState, d: &PlantState, k: f64| PlantState {
        n_t: s.n_t + k * d.n_t,
        t_tur_out: s.t_tur_out + k * d.t_tur_out,
    };
    let k1 = plant_derivatives(params, s, u)?;
    let k2 = plant_derivatives(params, &add(s, &k1, 0.5 * h), u)?;
    let k3 = plant_derivatives(params, &add(s, &k2, 0.5 * h), u)?;
    let k4 = plant_derivatives(params, &add(s, &k3, h), u)?;
    Ok(PlantState {
        n_t: s.n_t + h / 6.0 * (k1.n_t + 2.0 * k2.n_t + 2.0 * k3.n_t + k4.n_t),
        t_tur_out: s.t_tur_out + h / 6.0 * (k1.t_tur_out + 2.0 * k2.t_tur_out + 2.0 * k3.t_tur_out + k4.t_tur_out),
    })
}

/// Simulates the plant under `excitation` for `duration` seconds and records
/// it at `sample_rate`. Inputs are held constant over each sample interval.
/// `seed` drives the measurement noise; the excitation carries its own seed.
pub fn integrate(
    params: &PlantParams,
    excitation: &ExcitationSpec,
    duration: f64,
    sample_rate: f64,
    seed: u64,
) -> Result<TimeSeriesDataset> {
    integrate_with(params, excitation, duration, sample_rate, seed, &IntegrateOptions::default())
}

pub fn integrate_with(
    params: &PlantParams,
    excitation: &ExcitationSpec,
    duration: f64,
    sample_rate: f64,
    seed: u64,
    options: &IntegrateOptions,
) -> Result<TimeSeriesDataset> {
    params.validate()?;
    excitation.validate(&params.input_ranges)?;
    if !(sample_rate > 0.0) || !(duration > 0.0) {
        return Err(Error::InvalidInput("duration and sample rate must be positive".into()));
    }
    let len = (duration * sample_rate).round() as usize;
    if len < 2 {
        return Err(Error::InsufficientData(format!(
            "{duration} s at {sample_rate} Hz gives fewer than two samples"
        )));
    }
    if options.substeps == 0 {
        return Err(Error::InvalidInput("substeps must be at least 1".into()));
    }
    let inputs = excitation.generate(len, sample_rate);
    let input_at = |k: usize| {
        let mut v = [0.0; 9];
        for (i, ch) in inputs.iter().enumerate() {
            v[i] = ch[k];
        }
        PlantInputs::from_array(v)
    };

    let mut state = match options.initial_state {
        Some(s) => s,
        None => equilibrium(params, &input_at(0))?,
    };
    let h = 1.0 / (sample_rate * options.substeps as f64);
    let mut noise = SeededStream::new(seed);
    let mut speed = Vec::with_capacity(len);
    let mut temp = Vec::with_capacity(len);
    for k in 0..len {
        let (sn, st) = options.noise_std;
        speed.push(state.n_t + if sn > 0.0 { sn * noise.normal() } else { 0.0 });
        temp.push(state.t_tur_out + if st > 0.0 { st * noise.normal() } else { 0.0 });
        if k + 1 == len {
            break;
        }
        let u = input_at(k);
        for sub in 0..options.substeps {
            let time_s = (k as f64 + sub as f64 / options.substeps as f64) / sample_rate;
            state = rk4_step(params, &state, &u, h).map_err(|e| Error::PlantFailure {
                time_s,
                reason: e.to_string(),
            })?;
            if !state.n_t.is_finite() || !state.t_tur_out.is_finite() {
                return Err(Error::PlantFailure {
                    time_s,
                    reason: "non-finite state".into(),
                });
            }
        }
    }

    let mut channels = vec![
        Channel::new(STATE_CHANNELS[0].0, STATE_CHANNELS[0].1, ChannelRole::State, speed),
        Channel::new(STATE_CHANNELS[1].0, STATE_CHANNELS[1].1, ChannelRole::State, temp),
    ];
    for ((name, unit), values) in INPUT_CHANNELS.iter().zip(inputs) {
        channels.push(Channel::new(*name, *unit, ChannelRole::Input, values));
    }
    TimeSeriesDataset::new("surrogate", sample_rate, channels)
}

/// Training cycles plus the two validation cycles.
#[derive(Debug, Clone)]
pub struct DutyCycles {
    pub train: Vec<TimeSeriesDataset>,
    /// Rapid random load steps.
    pub transient_test: TimeSeriesDataset,
    /// Staircase holds.
    pub steady_test: TimeSeriesDataset,
}

const ACTUATORS: [usize; 2] = [0, 1];
const THERMAL_AMBIENT: [usize; 2] = [6, 7];

fn signals(params: &PlantParams, actuator: SignalKind, engine: SignalKind, engine_weight: f64, actuator_weight: f64) -> Vec<InputSignal> {
    (0..9)
        .map(|i| {
            let (low, high) = params.input_ranges[i];
            let (kind, load_weight) = if ACTUATORS.contains(&i) {
                (actuator.clone(), actuator_weight)
            } else if THERMAL_AMBIENT.contains(&i) {
                (SignalKind::FilteredNoise { time_constant_s: 20.0 }, 0.3)
            } else {
                (engine.clone(), engine_weight)
            };
            InputSignal {
                kind,
                low,
                high,
                load_weight,
            }
        })
        .collect()
}

/// Builds the training set (three differently excited cycles covering the
/// full input ranges) and two held-out validation cycles with their own
/// seeds: a transient cycle of fast load steps and a staircase cycle of long
/// holds.
pub fn make_duty_cycles(params: &PlantParams, seed: u64) -> Result<DutyCycles> {
    make_duty_cycles_with(params, seed, 100.0, &IntegrateOptions::default())
}

/// As [`make_duty_cycles`] with an explicit sample rate and integrator
/// settings. `options.initial_state` is ignored; every cycle starts at
/// equilibrium.
pub fn make_duty_cycles_with(
    params: &PlantParams,
    seed: u64,
    sample_rate: f64,
    options: &IntegrateOptions,
) -> Result<DutyCycles> {
    let options = IntegrateOptions {
        initial_state: None,
        ..options.clone()
    };
    let run = |spec: &ExcitationSpec, duration: f64, salt: u64| {
        integrate_with(params, spec, duration, sample_rate, derive_seed(seed, salt), &options)
    };
    const TRAIN_S: f64 = 200.0;
    let excite = |load: LoadProfile, signals: Vec<InputSignal>, salt: u64| ExcitationSpec {
        load,
        signals,
        seed: derive_seed(seed, salt),
    };

    let train_specs = [
        excite(
            LoadProfile {
                min_hold_s: 3.0,
                max_hold_s: 10.0,
                ramp_s: 1.0,
                levels: None,
            },
            signals(
                params,
                SignalKind::Steps {
                    min_hold_s: 0.5,
                    max_hold_s: 4.0,
                },
                SignalKind::Steps {
                    min_hold_s: 1.0,
                    max_hold_s: 5.0,
                },
                0.6,
                0.0,
            ),
            1,
        ),
        excite(
            LoadProfile {
                min_hold_s: 2.0,
                max_hold_s: 8.0,
                ramp_s: 2.0,
                levels: None,
            },
            signals(
                params,
                SignalKind::Chirp { f0_hz: 0.01, f1_hz: 0.5 },
                SignalKind::FilteredNoise { time_constant_s: 1.0 },
                0.6,
                0.0,
            ),
            2,
        ),
        excite(
            LoadProfile {
                min_hold_s: 1.0,
                max_hold_s: 6.0,
                ramp_s: 0.5,
                levels: None,
            },
            signals(
                params,
                SignalKind::FilteredNoise { time_constant_s: 2.0 },
                SignalKind::Steps {
                    min_hold_s: 0.5,
                    max_hold_s: 3.0,
                },
                0.5,
                0.2,
            ),
            3,
        ),
    ];
    let mut train = Vec::with_capacity(train_specs.len());
    for (k, spec) in train_specs.iter().enumerate() {
        let mut d = run(spec, TRAIN_S, 100 + k as u64)?;
        d.name = format!("train_{k}");
        train.push(d);
    }

    let transient = excite(
        LoadProfile {
            min_hold_s: 0.5,
            max_hold_s: 3.0,
            ramp_s: 0.3,
            levels: None,
        },
        signals(
            params,
            SignalKind::Steps {
                min_hold_s: 0.5,
                max_hold_s: 3.0,
            },
            SignalKind::FilteredNoise { time_constant_s: 0.5 },
            0.7,
            0.5,
        ),
        11,
    );
    let mut transient_test = run(&transient, 120.0, 111)?;
    transient_test.name = "transient_test".into();

    let steady = excite(
        LoadProfile {
            min_hold_s: 15.0,
            max_hold_s: 25.0,
            ramp_s: 2.0,
            levels: Some(6),
        },
        signals(
            params,
            SignalKind::Steps {
                min_hold_s: 15.0,
                max_hold_s: 25.0,
            },
            SignalKind::Constant { level: 0.5 },
            0.8,
            0.6,
        ),
        12,
    );
    let mut steady_test = run(&steady, 150.0, 112)?;
    steady_test.name = "steady_test".into();

    Ok(DutyCycles {
        train,
        transient_test,
        steady_test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::nominal_inputs;

    fn constant_excitation(params: &PlantParams, level: f64) -> ExcitationSpec {
        ExcitationSpec {
            load: LoadProfile {
                min_hold_s: 1.0,
                max_hold_s: 1.0,
                ramp_s: 0.0,
                levels: None,
            },
            signals: params
                .input_ranges
                .iter()
                .map(|&(low, high)| InputSignal {
                    kind: SignalKind::Constant { level },
                    low,
                    high,
                    load_weight: 0.0,
                })
                .collect(),
            seed: 0,
        }
    }

    #[test]
    fn sixty_seconds_at_100_hz() {
        let p = PlantParams::default();
        let d = integrate(&p, &constant_excitation(&p, 0.5), 60.0, 100.0, 1).unwrap();
        assert_eq!(d.len(), 6000);
        assert_eq!(d.channels().len(), 11);
        assert_eq!(d.channel("N_t").unwrap().unit, "rpm");
    }

    #[test]
    fn settles_to_equilibrium_from_offset_start() {
        let p = PlantParams::default();
        let u = nominal_inputs(&p);
        let eq = equilibrium(&p, &u).unwrap();
        let opts = IntegrateOptions {
            initial_state: Some(PlantState {
                n_t: 0.6 * eq.n_t,
                t_tur_out: eq.t_tur_out - 80.0,
            }),
            ..Default::default()
        };
        let d = integrate_with(&p, &constant_excitation(&p, 0.5), 40.0, 100.0, 0, &opts).unwrap();
        let n = *d.values("N_t").unwrap().last().unwrap();
        let t = *d.values("T_tur_out").unwrap().last().unwrap();
        assert!((n - eq.n_t).abs() / eq.n_t < 1e-3);
        assert!((t - eq.t_tur_out).abs() / eq.t_tur_out < 1e-3);
    }

    #[test]
    fn zero_substeps_and_short_runs_rejected() {
        let p = PlantParams::default();
        let e = constant_excitation(&p, 0.5);
        assert!(integrate(&p, &e, 0.01, 100.0, 0).is_err());
        let opts = IntegrateOptions {
            substeps: 0,
            ..Default::default()
        };
        assert!(integrate_with(&p, &e, 1.0, 100.0, 0, &opts).is_err());
    }

    #[test]
    fn floor_violation_reports_time() {
        let p = PlantParams::default();
        let opts = IntegrateOptions {
            initial_state: Some(PlantState {
                n_t: p.speed_floor() * 1.0001,
                t_tur_out: 700.0,
            }),
            substeps: 1,
            ..Default::default()
        };
        // strong compressor load at the floor drives the speed below it
        let heavy = PlantParams {
            k_c: 1.0,
            ..p.clone()
        };
        match integrate_with(&heavy, &constant_excitation(&p, 0.0), 1.0, 100.0, 0, &opts) {
            Err(Error::PlantFailure { time_s, .. }) => assert!(time_s < 1.0),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn measurement_noise_is_seeded() {
        let p = PlantParams::default();
        let e = constant_excitation(&p, 0.3);
        let opts = IntegrateOptions {
            noise_std: (100.0, 1.0),
            ..Default::default()
        };
        let a = integrate_with(&p, &e, 2.0, 100.0, 7, &opts).unwrap();
        let b = integrate_with(&p, &e, 2.0, 100.0, 7, &opts).unwrap();
        let c = integrate_with(&p, &e, 2.0, 100.0, 8, &opts).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values("N_t").unwrap(), c.values("N_t").unwrap());
    }
}
