//! Mean-value turbine surrogate used to generate identification data.
//!
//! States are the shaft speed `N_t` (rpm) and the *measured* turbine outlet
//! temperature `T_tur_out` (K). Nine exogenous inputs drive the plant.
//!
//! Rotor: Newton's law for the shaft with turbine and compressor power,
//!
//! ```text
//! dω/dt = (P_t/ω - P_c/ω - M_fric(ω)) / J_t,   ω = N_t · 2π/60
//! ```
//!
//! Gas: steady enthalpy balance over the turbine gives the outlet temperature
//! the thermocouple would settle to,
//!
//! ```text
//! Ẇ c_p T_in = Ẇ c_p T_target + τ ω - Q̇_housing,   τ ω = P_t
//! ```
//!
//! and the recorded temperature follows it through a first-order sensor lag.
//!
//! Units: `τ ω` uses ω in rad/s, so the product is a power in W. Inputs keep
//! their engineering units (%, K, kPa, rpm, mg) and are converted here.
//!
//! Maps are smooth analytic stand-ins, not calibrated turbomachinery data:
//!
//! * nozzle flow: `Ẇ_nozzle = c_w · A(u_vgt) · P_in / sqrt(T_in) · sqrt(1 - PR⁻²)`,
//!   `A(u_vgt) = 1 - a_vgt · u_vgt/100` (vane closure shrinks the throat);
//! * total flow: `Ẇ = Ẇ_nozzle · (1 - k_egr · u_egrv/100) + ṁ_fuel`, with
//!   `ṁ_fuel = m_f · 1e-6 · N_e/120 · n_cyl` (kg/s), affine in `u_egrv` and `m_f`;
//! * efficiency: `η = η_max (1 - a_η ((u_vgt - u*)/100)²) (1 - exp(-(PR - 1)/s_pr))`;
//! * turbine power: `P_t = η Ẇ c_p T_in (1 - PR^{-(γ-1)/γ})`;
//! * compressor load: `P_c = k_c ω³ · T_comp_out / T_comp_ref`;
//! * friction: `M_fric = k₁ ω + k₂ ω²`;
//! * housing heat flow into the gas: `Q̇ = h_loss (T_wall - T_in)` with
//!   `T_wall = w_oil T_oil + (1 - w_oil) T_coolant` (negative for hot gas).

mod excitation;
mod simulate;

pub use excitation::{ExcitationSpec, InputSignal, LoadProfile, SignalKind};
pub use simulate::{integrate, integrate_with, make_duty_cycles, make_duty_cycles_with, DutyCycles, IntegrateOptions};

use crate::error::{Error, Result};

pub const SPEED: &str = "N_t";
pub const OUTLET_TEMPERATURE: &str = "T_tur_out";

pub const STATE_CHANNELS: [(&str, &str); 2] = [(SPEED, "rpm"), (OUTLET_TEMPERATURE, "K")];

/// Input channel names and units, in plant input-vector order.
pub const INPUT_CHANNELS: [(&str, &str); 9] = [
    ("u_vgt", "%"),
    ("u_egrv", "%"),
    ("T_tur_in", "K"),
    ("P_tur_in", "kPa"),
    ("N_e", "rpm"),
    ("m_f", "mg"),
    ("T_oil", "K"),
    ("T_coolant", "K"),
    ("T_comp_out", "K"),
];

pub fn state_names() -> Vec<String> {
    STATE_CHANNELS.iter().map(|(n, _)| n.to_string()).collect()
}

pub fn input_names() -> Vec<String> {
    INPUT_CHANNELS.iter().map(|(n, _)| n.to_string()).collect()
}

const RPM_TO_RAD_S: f64 = 2.0 * std::f64::consts::PI / 60.0;

/// Plant input vector (engineering units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantInputs {
    pub u_vgt: f64,
    pub u_egrv: f64,
    pub t_tur_in: f64,
    pub p_tur_in: f64,
    pub n_e: f64,
    pub m_f: f64,
    pub t_oil: f64,
    pub t_coolant: f64,
    pub t_comp_out: f64,
}

impl PlantInputs {
    pub fn from_array(v: [f64; 9]) -> Self {
        PlantInputs {
            u_vgt: v[0],
            u_egrv: v[1],
            t_tur_in: v[2],
            p_tur_in: v[3],
            n_e: v[4],
            m_f: v[5],
            t_oil: v[6],
            t_coolant: v[7],
            t_comp_out: v[8],
        }
    }

    pub fn to_array(self) -> [f64; 9] {
        [
            self.u_vgt,
            self.u_egrv,
            self.t_tur_in,
            self.p_tur_in,
            self.n_e,
            self.m_f,
            self.t_oil,
            self.t_coolant,
            self.t_comp_out,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    /// Shaft speed, rpm.
    pub n_t: f64,
    /// Recorded outlet temperature, K.
    pub t_tur_out: f64,
}

/// Physical parameters of the surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantParams {
    /// Rotor inertia, kg·m².
    pub j_t: f64,
    /// Exhaust isobaric specific heat, J/(kg·K).
    pub c_p: f64,
    /// Exhaust heat-capacity ratio.
    pub gamma: f64,
    /// Turbine outlet (ambient) pressure, kPa.
    pub p_out: f64,
    /// Viscous friction, N·m·s.
    pub k1: f64,
    /// Quadratic friction, N·m·s².
    pub k2: f64,
    /// Housing heat-transfer conductance, W/K.
    pub h_loss: f64,
    /// Oil weight in the housing wall temperature.
    pub wall_oil_weight: f64,
    /// Nozzle flow coefficient, kg·K^0.5/(s·kPa).
    pub flow_coefficient: f64,
    /// Fractional throat-area reduction at full vane closure.
    pub vgt_area_gain: f64,
    /// Fraction of exhaust diverted at full EGR valve opening.
    pub egr_flow_gain: f64,
    pub cylinders: f64,
    pub eta_max: f64,
    /// Quadratic efficiency drop-off in vane position.
    pub eta_vgt_curvature: f64,
    /// Vane position of peak efficiency, %.
    pub eta_vgt_optimum: f64,
    /// Pressure-ratio scale of the efficiency rise.
    pub eta_pr_scale: f64,
    /// Compressor load coefficient, W·s³.
    pub k_c: f64,
    /// Reference compressor outlet temperature, K.
    pub t_comp_ref: f64,
    /// Thermocouple time constant, s.
    pub sensor_time_constant: f64,
    /// Rated shaft speed, rpm.
    pub rated_speed: f64,
    /// Nominal `(low, high)` range per input channel, plant order.
    pub input_ranges: [(f64, f64); 9],
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            j_t: 2.0e-4,
            c_p: 1150.0,
            gamma: 1.33,
            p_out: 101.325,
            k1: 2.0e-5,
            k2: 1.0e-9,
            h_loss: 15.0,
            wall_oil_weight: 0.7,
            flow_coefficient: 0.05,
            vgt_area_gain: 0.6,
            egr_flow_gain: 0.3,
            cylinders: 6.0,
            eta_max: 0.72,
            eta_vgt_curvature: 1.2,
            eta_vgt_optimum: 55.0,
            eta_pr_scale: 0.4,
            k_c: 3.0e-8,
            t_comp_ref: 380.0,
            sensor_time_constant: 2.0,
            rated_speed: 200_000.0,
            input_ranges: [
                (20.0, 90.0),
                (0.0, 60.0),
                (650.0, 950.0),
                (130.0, 330.0),
                (800.0, 2100.0),
                (30.0, 250.0),
                (340.0, 390.0),
                (340.0, 370.0),
                (300.0, 450.0),
            ],
        }
    }
}

/// Intermediate quantities of the plant model at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantTerms {
    /// Shaft angular speed, rad/s.
    pub omega: f64,
    pub pressure_ratio: f64,
    /// Turbine mass flow, kg/s.
    pub mass_flow: f64,
    pub efficiency: f64,
    /// Turbine power, W.
    pub turbine_power: f64,
    /// Compressor power, W.
    pub compressor_power: f64,
    /// Friction torque, N·m.
    pub friction_torque: f64,
    /// Turbine torque `P_t / ω`, N·m.
    pub torque: f64,
    /// Heat flow from the housing into the gas, W.
    pub housing_heat: f64,
    /// Outlet temperature implied by the enthalpy balance, K.
    pub target_temperature: f64,
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("j_t", self.j_t),
            ("c_p", self.c_p),
            ("p_out", self.p_out),
            ("flow_coefficient", self.flow_coefficient),
            ("sensor_time_constant", self.sensor_time_constant),
            ("rated_speed", self.rated_speed),
            ("eta_pr_scale", self.eta_pr_scale),
            ("t_comp_ref", self.t_comp_ref),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.gamma > 1.0) {
            return Err(Error::InvalidInput("gamma must exceed 1".into()));
        }
        for (i, (lo, hi)) in self.input_ranges.iter().enumerate() {
            if !(lo <= hi) {
                return Err(Error::InvalidInput(format!(
                    "range of input `{}` is not ordered",
                    INPUT_CHANNELS[i].0
                )));
            }
        }
        Ok(())
    }

    /// Speeds below this (1 % of rated) are outside the model.
    pub fn speed_floor(&self) -> f64 {
        0.01 * self.rated_speed
    }

    /// Mass flow, kg/s.
    pub fn mass_flow(&self, u: &PlantInputs) -> f64 {
        let pr = u.p_tur_in / self.p_out;
        let area = 1.0 - self.vgt_area_gain * u.u_vgt / 100.0;
        let flow_fn = (1.0 - 1.0 / (pr * pr)).max(0.0).sqrt();
        let nozzle = self.flow_coefficient * area * u.p_tur_in / u.t_tur_in.sqrt() * flow_fn;
        let fuel = u.m_f * 1e-6 * u.n_e / 120.0 * self.cylinders;
        nozzle * (1.0 - self.egr_flow_gain * u.u_egrv / 100.0) + fuel
    }

    pub fn efficiency(&self, u: &PlantInputs) -> f64 {
        let pr = u.p_tur_in / self.p_out;
        let dv = (u.u_vgt - self.eta_vgt_optimum) / 100.0;
        let vane = 1.0 - self.eta_vgt_curvature * dv * dv;
        let rise = 1.0 - (-(pr - 1.0) / self.eta_pr_scale).exp();
        (self.eta_max * vane * rise).max(0.0)
    }

    /// Evaluates every intermediate term at speed `n_t` (rpm).
    pub fn terms(&self, n_t: f64, u: &PlantInputs) -> PlantTerms {
        let omega = n_t * RPM_TO_RAD_S;
        let pr = u.p_tur_in / self.p_out;
        let mass_flow = self.mass_flow(u);
        let efficiency = self.efficiency(u);
        let expansion = 1.0 - pr.powf(-(self.gamma - 1.0) / self.gamma);
        let turbine_power = efficiency * mass_flow * self.c_p * u.t_tur_in * expansion;
        let compressor_power = self.k_c * omega.powi(3) * u.t_comp_out / self.t_comp_ref;
        let friction_torque = self.k1 * omega + self.k2 * omega * omega;
        let wall = self.wall_oil_weight * u.t_oil + (1.0 - self.wall_oil_weight) * u.t_coolant;
        let housing_heat = self.h_loss * (wall - u.t_tur_in);
        let torque = turbine_power / omega;
        let target_temperature = u.t_tur_in - (torque * omega - housing_heat) / (mass_flow * self.c_p);
        PlantTerms {
            omega,
            pressure_ratio: pr,
            mass_flow,
            efficiency,
            turbine_power,
            compressor_power,
            friction_torque,
            torque,
            housing_heat,
            target_temperature,
        }
    }
}

/// Shaft angular acceleration (rad/s²) from the power balance.
pub fn rotor_acceleration(inertia: f64, turbine_power: f64, compressor_power: f64, friction_torque: f64, omega: f64) -> f64 {
    let imbalance = turbine_power - compressor_power - friction_torque * omega;
    imbalance / (inertia * omega)
}

/// State derivative `(dN_t/dt [rpm/s], dT_tur_out/dt [K/s])`.
pub fn plant_derivatives(params: &PlantParams, state: &PlantState, inputs: &PlantInputs) -> Result<PlantState> {
    let floor = params.speed_floor();
    if !(state.n_t > floor) {
        return Err(Error::SpeedFloor {
            speed_rpm: state.n_t,
            floor_rpm: floor,
        });
    }
    let t = params.terms(state.n_t, inputs);
    let accel = rotor_acceleration(params.j_t, t.turbine_power, t.compressor_power, t.friction_torque, t.omega);
    Ok(PlantState {
        n_t: accel / RPM_TO_RAD_S,
        t_tur_out: (t.target_temperature - state.t_tur_out) / params.sensor_time_constant,
    })
}

/// Steady state for constant inputs: the speed root of the power balance
/// (bracketed bisection polished by Newton) and the enthalpy-balance
/// temperature.
pub fn equilibrium(params: &PlantParams, inputs: &PlantInputs) -> Result<PlantState> {
    let net = |omega: f64| {
        let t = params.terms(omega / RPM_TO_RAD_S, inputs);
        t.turbine_power - t.compressor_power - t.friction_torque * omega
    };
    let mut lo = params.speed_floor() * RPM_TO_RAD_S;
    if net(lo) <= 0.0 {
        return Err(Error::SpeedFloor {
            speed_rpm: params.speed_floor(),
            floor_rpm: params.speed_floor(),
        });
    }
    let mut hi = lo * 2.0;
    while net(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::InvalidInput("no speed equilibrium below 1e9 rad/s".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if net(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    let mut omega = 0.5 * (lo + hi);
    for _ in 0..3 {
        let h = 1e-6 * omega;
        let slope = (net(omega + h) - net(omega - h)) / (2.0 * h);
        if slope != 0.0 {
            let next = omega - net(omega) / slope;
            if next.is_finite() && next > lo * 0.5 {
                omega = next;
            }
        }
    }
    let n_t = omega / RPM_TO_RAD_S;
    Ok(PlantState {
        n_t,
        t_tur_out: params.terms(n_t, inputs).target_temperature,
    })
}

/// Midpoint of every nominal input range.
pub fn nominal_inputs(params: &PlantParams) -> PlantInputs {
    let mut v = [0.0; 9];
    for (i, (lo, hi)) in params.input_ranges.iter().enumerate() {
        v[i] = 0.5 * (lo + hi);
    }
    PlantInputs::from_array(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_torque_has_zero_acceleration() {
        assert_eq!(rotor_acceleration(2e-4, 30_000.0, 30_000.0, 0.0, 9_000.0), 0.0);
    }

    #[test]
    fn no_work_no_heat_keeps_inlet_temperature() {
        let params = PlantParams {
            h_loss: 0.0,
            eta_max: 0.0,
            ..Default::default()
        };
        let u = nominal_inputs(&params);
        let t = params.terms(80_000.0, &u);
        assert_eq!(t.turbine_power, 0.0);
        assert_eq!(t.target_temperature, u.t_tur_in);
    }

    #[test]
    fn doubled_inertia_halves_acceleration() {
        let p1 = PlantParams::default();
        let p2 = PlantParams {
            j_t: 2.0 * p1.j_t,
            ..p1.clone()
        };
        let u = nominal_inputs(&p1);
        let s = PlantState {
            n_t: 60_000.0,
            t_tur_out: 700.0,
        };
        let d1 = plant_derivatives(&p1, &s, &u).unwrap();
        let d2 = plant_derivatives(&p2, &s, &u).unwrap();
        assert_ne!(d1.n_t, 0.0);
        assert_eq!(d2.n_t, d1.n_t / 2.0);
    }

    #[test]
    fn below_floor_is_an_error() {
        let p = PlantParams::default();
        let s = PlantState {
            n_t: 0.5 * p.speed_floor(),
            t_tur_out: 700.0,
        };
        assert!(matches!(
            plant_derivatives(&p, &s, &nominal_inputs(&p)),
            Err(Error::SpeedFloor { .. })
        ));
    }

    #[test]
    fn equilibrium_zeroes_derivatives_and_balances_energy() {
        let p = PlantParams::default();
        for corner in [0.0, 0.5, 1.0] {
            let mut v = [0.0; 9];
            for (i, (lo, hi)) in p.input_ranges.iter().enumerate() {
                v[i] = lo + corner * (hi - lo);
            }
            let u = PlantInputs::from_array(v);
            let eq = equilibrium(&p, &u).unwrap();
            let d = plant_derivatives(&p, &eq, &u).unwrap();
            assert!(d.n_t.abs() < 1e-6 && d.t_tur_out.abs() < 1e-9, "{d:?}");
            let t = p.terms(eq.n_t, &u);
            let inflow = t.mass_flow * p.c_p * u.t_tur_in;
            let resid = inflow - t.mass_flow * p.c_p * eq.t_tur_out - t.torque * t.omega + t.housing_heat;
            assert!(resid.abs() / inflow < 1e-6);
            assert!(eq.n_t > 20_000.0 && eq.n_t < 180_000.0, "speed {}", eq.n_t);
        }
    }
}
