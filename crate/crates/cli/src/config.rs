//! Run configuration.

use std::path::{Path, PathBuf};

use koopman_turbine::surrogate;
use koopman_turbine::DictionaryFamily;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Annotated configuration file listing every key with its default.
pub const SCHEMA: &str = r#"# kturb run configuration (TOML). Every key is optional; the values shown
# are the defaults. Command-line flags override the file.

# Master seed for data generation, RBF centers and network initialization.
seed = 42
# Directory receiving every artifact.
out_dir = "runs"

[data]
# Training and test CSV files. Empty lists mean the files written by
# `gen-data` under <out_dir>/data.
train = []
test = []
# Channels treated as states (modeled outputs) and exogenous inputs.
states = ["N_t", "T_tur_out"]
inputs = ["u_vgt", "u_egrv", "T_tur_in", "P_tur_in", "N_e", "m_f", "T_oil", "T_coolant", "T_comp_out"]

[generate]
sample_rate = 100.0
# RK4 steps per output sample.
substeps = 4
# Standard deviation of additive measurement noise.
noise_speed_rpm = 0.0
noise_temperature_k = 0.0

[dictionary]
# identity_only | polyharmonic | gaussian | multiquadric |
# inverse_quadratic | inverse_multiquadric | polynomial
family = "polyharmonic"
n_centers = 100
# Shape parameter of the parametric radial families.
shape_parameter = 1.0
# Center sampling box in normalized units: [low, high] or "auto" (the range
# of the normalized training states).
center_bounds = [-1.8, 1.8]
# Highest total degree for the polynomial family.
polynomial_degree = 3
# Also z-score the inputs.
normalize_inputs = false

[fit]
# Singular values at or below this are treated as zero; 0 selects
# max(rows, cols) * machine epsilon * largest singular value.
rank_tolerance = 0.0
# Tikhonov parameter; 0 disables ridge regularization.
ridge = 0.0

[narx]
feedback_delay_s = 0.01
l2_penalty = 0.0001
max_epochs = 60
lm_initial_damping = 0.001
lm_damping_factor = 10.0
# Train on every k-th regressor row.
train_stride = 10

[[narx.outputs]]
channel = "N_t"
input_delay_s = 0.1
hidden_neurons = 20

[[narx.outputs]]
channel = "T_tur_out"
input_delay_s = 2.0
hidden_neurons = 14

[evaluate]
# edmd and/or narx
methods = ["edmd", "narx"]
# Samples excluded from the metrics at the start of each record; negative
# selects the largest NARX warm-up.
warmup_samples = -1

[sweep]
rbf_counts = [0, 50, 100, 150]
parallel = true
"#;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub generate: GenerateConfig,
    pub dictionary: DictionaryConfig,
    pub fit: FitConfig,
    pub narx: NarxSection,
    pub evaluate: EvaluateConfig,
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
    pub states: Vec<String>,
    pub inputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub sample_rate: f64,
    pub substeps: usize,
    pub noise_speed_rpm: f64,
    pub noise_temperature_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CenterBounds {
    Fixed([f64; 2]),
    Mode(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DictionaryConfig {
    pub family: DictionaryFamily,
    pub n_centers: usize,
    pub shape_parameter: f64,
    pub center_bounds: CenterBounds,
    pub polynomial_degree: usize,
    pub normalize_inputs: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub rank_tolerance: f64,
    pub ridge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NarxOutput {
    pub channel: String,
    pub input_delay_s: f64,
    pub hidden_neurons: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NarxSection {
    pub feedback_delay_s: f64,
    pub l2_penalty: f64,
    pub max_epochs: usize,
    pub lm_initial_damping: f64,
    pub lm_damping_factor: f64,
    pub train_stride: usize,
    pub outputs: Vec<NarxOutput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub methods: Vec<String>,
    pub warmup_samples: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub rbf_counts: Vec<usize>,
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out_dir: PathBuf::from("runs"),
            data: DataConfig::default(),
            generate: GenerateConfig::default(),
            dictionary: DictionaryConfig::default(),
            fit: FitConfig::default(),
            narx: NarxSection::default(),
            evaluate: EvaluateConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train: Vec::new(),
            test: Vec::new(),
            states: surrogate::state_names(),
            inputs: surrogate::input_names(),
        }
    }
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            sample_rate: 100.0,
            substeps: 4,
            noise_speed_rpm: 0.0,
            noise_temperature_k: 0.0,
        }
    }
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        DictionaryConfig {
            family: DictionaryFamily::Polyharmonic,
            n_centers: 100,
            shape_parameter: 1.0,
            center_bounds: CenterBounds::Fixed([-1.8, 1.8]),
            polynomial_degree: 3,
            normalize_inputs: false,
        }
    }
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            rank_tolerance: 0.0,
            ridge: 0.0,
        }
    }
}

impl Default for NarxSection {
    fn default() -> Self {
        NarxSection {
            feedback_delay_s: 0.01,
            l2_penalty: 1e-4,
            max_epochs: 60,
            lm_initial_damping: 1e-3,
            lm_damping_factor: 10.0,
            train_stride: 10,
            outputs: vec![
                NarxOutput {
                    channel: surrogate::SPEED.to_string(),
                    input_delay_s: 0.1,
                    hidden_neurons: 20,
                },
                NarxOutput {
                    channel: surrogate::OUTLET_TEMPERATURE.to_string(),
                    input_delay_s: 2.0,
                    hidden_neurons: 14,
                },
            ],
        }
    }
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            methods: vec!["edmd".into(), "narx".into()],
            warmup_samples: -1,
        }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            rbf_counts: vec![0, 50, 100, 150],
            parallel: true,
        }
    }
}

/// Values given on the command line; `None` keeps the file value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub n_centers: Option<usize>,
    pub family: Option<DictionaryFamily>,
    pub rbf_counts: Option<Vec<usize>>,
    pub train: Option<Vec<PathBuf>>,
    pub test: Option<Vec<PathBuf>>,
}

/// File names written by `gen-data`.
pub const TRAIN_FILES: [&str; 3] = ["train_0.csv", "train_1.csv", "train_2.csv"];
pub const TEST_FILES: [&str; 2] = ["transient_test.csv", "steady_test.csv"];

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads `path` if given, otherwise starts from the defaults, then applies
    /// the overrides.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        config.apply(overrides);
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(n) = o.n_centers {
            self.dictionary.n_centers = n;
        }
        if let Some(f) = o.family {
            self.dictionary.family = f;
        }
        if let Some(c) = &o.rbf_counts {
            self.sweep.rbf_counts = c.clone();
        }
        if let Some(t) = &o.train {
            self.data.train = t.clone();
        }
        if let Some(t) = &o.test {
            self.data.test = t.clone();
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out_dir.join("data")
    }

    pub fn train_paths(&self) -> Vec<PathBuf> {
        if self.data.train.is_empty() {
            TRAIN_FILES.iter().map(|f| self.data_dir().join(f)).collect()
        } else {
            self.data.train.clone()
        }
    }

    pub fn test_paths(&self) -> Vec<PathBuf> {
        if self.data.test.is_empty() {
            TEST_FILES.iter().map(|f| self.data_dir().join(f)).collect()
        } else {
            self.data.test.clone()
        }
    }

    pub fn edmd_model_path(&self) -> PathBuf {
        self.out_dir.join("edmd.model")
    }

    pub fn narx_model_path(&self, channel: &str) -> PathBuf {
        self.out_dir.join(format!("narx_{channel}.model"))
    }

    /// Fixed center bounds, or `None` for the automatic mode.
    pub fn fixed_bounds(&self) -> Option<(f64, f64)> {
        match self.dictionary.center_bounds {
            CenterBounds::Fixed([lo, hi]) => Some((lo, hi)),
            CenterBounds::Mode(_) => None,
        }
    }

    /// Checks everything that does not depend on data files.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.data.states.is_empty() {
            return bad("data.states must name at least one channel".into());
        }
        let mut names: Vec<&String> = self.data.states.iter().chain(&self.data.inputs).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("channel `{}` listed more than once", w[0]));
        }
        let g = &self.generate;
        if !(g.sample_rate > 0.0 && g.sample_rate.is_finite()) {
            return bad("generate.sample_rate must be positive".into());
        }
        if g.substeps == 0 {
            return bad("generate.substeps must be at least 1".into());
        }
        if !(g.noise_speed_rpm >= 0.0 && g.noise_temperature_k >= 0.0) {
            return bad("noise levels must be nonnegative".into());
        }
        let d = &self.dictionary;
        match &d.center_bounds {
            CenterBounds::Fixed([lo, hi]) if !(lo < hi && lo.is_finite() && hi.is_finite()) => {
                return bad(format!("dictionary.center_bounds [{lo}, {hi}] is not an interval"));
            }
            CenterBounds::Mode(m) if m != "auto" => {
                return bad(format!("dictionary.center_bounds must be [low, high] or \"auto\", got \"{m}\""));
            }
            _ => {}
        }
        if !(d.shape_parameter > 0.0 && d.shape_parameter.is_finite()) {
            return bad("dictionary.shape_parameter must be positive".into());
        }
        if d.family == DictionaryFamily::Polynomial && d.polynomial_degree < 1 {
            return bad("dictionary.polynomial_degree must be at least 1".into());
        }
        if !(self.fit.rank_tolerance >= 0.0 && self.fit.ridge >= 0.0) {
            return bad("fit.rank_tolerance and fit.ridge must be nonnegative".into());
        }
        let n = &self.narx;
        if !(n.feedback_delay_s > 0.0) {
            return bad("narx.feedback_delay_s must be positive".into());
        }
        if (n.feedback_delay_s * g.sample_rate).round() < 1.0 {
            return bad("narx.feedback_delay_s is shorter than one sample".into());
        }
        for o in &n.outputs {
            if !self.data.states.contains(&o.channel) {
                return bad(format!("narx output `{}` is not a state channel", o.channel));
            }
            if !(o.input_delay_s >= 0.0) || o.hidden_neurons == 0 {
                return bad(format!("narx output `{}` needs a nonnegative delay and at least one neuron", o.channel));
            }
        }
        for m in &self.evaluate.methods {
            if m != "edmd" && m != "narx" {
                return bad(format!("unknown evaluation method `{m}`"));
            }
        }
        if self.evaluate.methods.is_empty() {
            return bad("evaluate.methods is empty".into());
        }
        if self.sweep.rbf_counts.is_empty() {
            return bad("sweep.rbf_counts is empty".into());
        }
        // the narx-specific checks happen in the core on conversion
        for o in &n.outputs {
            self.narx_config(o, g.sample_rate).validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Fails with a configuration error if any path is missing.
    pub fn check_files(paths: &[PathBuf]) -> Result<(), CliError> {
        for p in paths {
            if !p.is_file() {
                return Err(CliError::Config(format!("data file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn narx_config(&self, output: &NarxOutput, sample_rate: f64) -> koopman_turbine::NarxConfig {
        let n = &self.narx;
        let index = n.outputs.iter().position(|o| o == output).unwrap_or(0) as u64;
        koopman_turbine::NarxConfig {
            input_delay_steps: koopman_turbine::narx::delay_steps(output.input_delay_s, sample_rate),
            feedback_delay_steps: koopman_turbine::narx::delay_steps(n.feedback_delay_s, sample_rate),
            hidden_neurons: output.hidden_neurons,
            l2_penalty: n.l2_penalty,
            max_epochs: n.max_epochs,
            seed: koopman_turbine::rng::derive_seed(self.seed, 1000 + index),
            lm_initial_damping: n.lm_initial_damping,
            lm_damping_factor: n.lm_damping_factor,
            train_stride: n.train_stride,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_matches_defaults() {
        assert_eq!(RunConfig::from_toml(SCHEMA).unwrap(), RunConfig::default());
    }

    #[test]
    fn serialized_config_round_trips() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_key_is_a_config_error() {
        assert!(matches!(RunConfig::from_toml("sede = 1"), Err(CliError::Config(_))));
    }

    #[test]
    fn overrides_win() {
        let mut c = RunConfig::from_toml("seed = 3\n[dictionary]\nn_centers = 7").unwrap();
        c.apply(&Overrides {
            seed: Some(9),
            ..Default::default()
        });
        assert_eq!(c.seed, 9);
        assert_eq!(c.dictionary.n_centers, 7);
    }

    #[test]
    fn auto_bounds_accepted_other_modes_rejected() {
        let c = RunConfig::from_toml("[dictionary]\ncenter_bounds = \"auto\"").unwrap();
        assert!(c.validate().is_ok());
        assert_eq!(c.fixed_bounds(), None);
        let c = RunConfig::from_toml("[dictionary]\ncenter_bounds = \"wide\"").unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::from_toml("[dictionary]\ncenter_bounds = [1.0, -1.0]").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn narx_output_must_be_a_state() {
        let c = RunConfig::from_toml("[[narx.outputs]]\nchannel = \"u_vgt\"\ninput_delay_s = 0.1\nhidden_neurons = 3").unwrap();
        assert!(c.validate().is_err());
    }
}
