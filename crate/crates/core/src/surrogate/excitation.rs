//! Input excitation signals.
//!
//! Each input channel mixes its own unit-range signal `s(t)` with a shared
//! engine-load profile `L(t)`:
//!
//! ```text
//! u(t) = low + (high - low) · clamp((1 - w) s(t) + w L(t), 0, 1)
//! ```
//!
//! so engine-side channels can move together the way they do on a real duty
//! cycle while actuators are excited independently.

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SeededStream};

#[derive(Debug, Clone, PartialEq)]
pub enum SignalKind {
    /// Random levels held for a uniformly drawn time.
    Steps { min_hold_s: f64, max_hold_s: f64 },
    /// Linear frequency sweep from `f0_hz` to `f1_hz` over the record.
    Chirp { f0_hz: f64, f1_hz: f64 },
    /// First-order low-pass filtered Gaussian noise.
    FilteredNoise { time_constant_s: f64 },
    /// Follows the shared load profile only.
    DutyCycleProfile,
    /// Fixed fraction of the range.
    Constant { level: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputSignal {
    pub kind: SignalKind,
    pub low: f64,
    pub high: f64,
    /// Weight of the shared load profile in `[0, 1]`.
    pub load_weight: f64,
}

/// Shared engine-load profile: random targets reached by linear ramps and
/// then held. With `levels = Some(k)` targets are quantized to a `k`-step
/// staircase.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    pub min_hold_s: f64,
    pub max_hold_s: f64,
    pub ramp_s: f64,
    pub levels: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationSpec {
    pub load: LoadProfile,
    pub signals: Vec<InputSignal>,
    pub seed: u64,
}

impl ExcitationSpec {
    pub fn validate(&self, ranges: &[(f64, f64)]) -> Result<()> {
        if self.signals.len() != ranges.len() {
            return Err(Error::Shape(format!(
                "{} excitation signals for {} inputs",
                self.signals.len(),
                ranges.len()
            )));
        }
        for (i, (s, (lo, hi))) in self.signals.iter().zip(ranges).enumerate() {
            if s.low < *lo || s.high > *hi || s.low > s.high {
                return Err(Error::InvalidInput(format!(
                    "signal {i} amplitude [{}, {}] outside plant range [{lo}, {hi}]",
                    s.low, s.high
                )));
            }
            if !(0.0..=1.0).contains(&s.load_weight) {
                return Err(Error::InvalidInput(format!("signal {i} load weight outside [0, 1]")));
            }
            let ok = match s.kind {
                SignalKind::Steps { min_hold_s, max_hold_s } => min_hold_s > 0.0 && min_hold_s <= max_hold_s,
                SignalKind::Chirp { f0_hz, f1_hz } => f0_hz >= 0.0 && f1_hz >= 0.0,
                SignalKind::FilteredNoise { time_constant_s } => time_constant_s > 0.0,
                SignalKind::DutyCycleProfile => true,
                SignalKind::Constant { level } => (0.0..=1.0).contains(&level),
            };
            if !ok {
                return Err(Error::InvalidInput(format!("signal {i} has invalid parameters")));
            }
        }
        let l = &self.load;
        if !(l.min_hold_s > 0.0 && l.min_hold_s <= l.max_hold_s && l.ramp_s >= 0.0) {
            return Err(Error::InvalidInput("load profile has invalid timing".into()));
        }
        Ok(())
    }

    /// Samples every input at `len` points spaced `1/sample_rate` apart.
    /// Returns one vector per input channel.
    pub fn generate(&self, len: usize, sample_rate: f64) -> Vec<Vec<f64>> {
        let dt = 1.0 / sample_rate;
        let load = load_profile(&self.load, len, dt, derive_seed(self.seed, 0));
        self.signals
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let own = unit_signal(&s.kind, len, dt, derive_seed(self.seed, i as u64 + 1));
                own.iter()
                    .zip(&load)
                    .map(|(o, l)| {
                        let frac = ((1.0 - s.load_weight) * o + s.load_weight * l).clamp(0.0, 1.0);
                        s.low + (s.high - s.low) * frac
                    })
                    .collect()
            })
            .collect()
    }
}

fn hold_samples(rng: &mut SeededStream, min_s: f64, max_s: f64, dt: f64) -> usize {
    ((rng.uniform(min_s, max_s) / dt).round() as usize).max(1)
}

fn load_profile(p: &LoadProfile, len: usize, dt: f64, seed: u64) -> Vec<f64> {
    let mut rng = SeededStream::new(seed);
    let quantize = |v: f64| match p.levels {
        Some(k) if k > 1 => (v * (k - 1) as f64).round() / (k - 1) as f64,
        _ => v,
    };
    let mut out = Vec::with_capacity(len);
    let mut level = quantize(rng.unit());
    let ramp = (p.ramp_s / dt).round() as usize;
    while out.len() < len {
        let target = quantize(rng.unit());
        for k in 1..=ramp {
            out.push(level + (target - level) * k as f64 / ramp as f64);
        }
        level = target;
        for _ in 0..hold_samples(&mut rng, p.min_hold_s, p.max_hold_s, dt) {
            out.push(level);
        }
    }
    out.truncate(len);
    out
}

fn unit_signal(kind: &SignalKind, len: usize, dt: f64, seed: u64) -> Vec<f64> {
    let mut rng = SeededStream::new(seed);
    match *kind {
        SignalKind::Steps { min_hold_s, max_hold_s } => {
            let mut out = Vec::with_capacity(len);
            while out.len() < len {
                let level = rng.unit();
                for _ in 0..hold_samples(&mut rng, min_hold_s, max_hold_s, dt) {
                    out.push(level);
                }
            }
            out.truncate(len);
            out
        }
        SignalKind::Chirp { f0_hz, f1_hz } => {
            let duration = len as f64 * dt;
            let phase0 = rng.uniform(0.0, 2.0 * std::f64::consts::PI);
            (0..len)
                .map(|k| {
                    let t = k as f64 * dt;
                    let phase = 2.0 * std::f64::consts::PI * (f0_hz * t + 0.5 * (f1_hz - f0_hz) * t * t / duration);
                    0.5 + 0.5 * (phase + phase0).sin()
                })
                .collect()
        }
        SignalKind::FilteredNoise { time_constant_s } => {
            // unit-variance AR(1), mapped so ±2.75σ spans the range
            let a = (-dt / time_constant_s).exp();
            let gain = (1.0 - a * a).sqrt();
            let mut x = rng.normal();
            (0..len)
                .map(|_| {
                    let v = (0.5 + x / 5.5).clamp(0.0, 1.0);
                    x = a * x + gain * rng.normal();
                    v
                })
                .collect()
        }
        SignalKind::DutyCycleProfile => vec![0.0; len],
        SignalKind::Constant { level } => vec![level; len],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: SignalKind, w: f64) -> ExcitationSpec {
        ExcitationSpec {
            load: LoadProfile {
                min_hold_s: 1.0,
                max_hold_s: 3.0,
                ramp_s: 0.5,
                levels: None,
            },
            signals: vec![InputSignal {
                kind,
                low: 10.0,
                high: 20.0,
                load_weight: w,
            }],
            seed: 5,
        }
    }

    #[test]
    fn signals_stay_in_range_and_are_reproducible() {
        for kind in [
            SignalKind::Steps { min_hold_s: 0.5, max_hold_s: 2.0 },
            SignalKind::Chirp { f0_hz: 0.01, f1_hz: 1.0 },
            SignalKind::FilteredNoise { time_constant_s: 1.0 },
            SignalKind::DutyCycleProfile,
            SignalKind::Constant { level: 0.25 },
        ] {
            let s = spec(kind.clone(), 0.3);
            let a = s.generate(2000, 100.0);
            assert!(a[0].iter().all(|v| (10.0..=20.0).contains(v)), "{kind:?}");
            assert_eq!(a, s.generate(2000, 100.0));
        }
    }

    #[test]
    fn staircase_levels_are_quantized() {
        let mut s = spec(SignalKind::DutyCycleProfile, 1.0);
        s.load.levels = Some(5);
        s.load.ramp_s = 0.0;
        let v = s.generate(3000, 100.0);
        for x in &v[0] {
            let frac = (x - 10.0) / 10.0 * 4.0;
            assert!((frac - frac.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn out_of_range_amplitude_rejected() {
        let s = spec(SignalKind::DutyCycleProfile, 1.0);
        assert!(s.validate(&[(10.0, 20.0)]).is_ok());
        assert!(s.validate(&[(12.0, 20.0)]).is_err());
        assert!(s.validate(&[(10.0, 20.0), (0.0, 1.0)]).is_err());
    }
}
