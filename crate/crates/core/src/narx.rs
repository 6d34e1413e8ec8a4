//! Time-delayed neural baseline (NARX).
//!
//! One network per output channel predicts
//! `y_l = h(y_{l - d_y}, u_{l - d_u})` with a single tanh hidden layer and a
//! linear output. Training is series-parallel (measured outputs are fed back)
//! and uses Levenberg-Marquardt on the analytic Jacobian; evaluation runs the
//! network closed-loop on its own predictions.

use std::path::Path;

use serde_json::json;

use crate::container::ModelFile;
use crate::dataset::TimeSeriesDataset;
use crate::edmd::NormalizationStats;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::rng::SeededStream;

const MODEL_TAG: [u8; 4] = *b"NARX";

/// Gradient-norm stopping threshold.
pub const GRADIENT_TOLERANCE: f64 = 1e-10;
/// Training stops once the damping parameter exceeds this.
pub const MAX_DAMPING: f64 = 1e10;

#[derive(Debug, Clone, PartialEq)]
pub struct NarxConfig {
    pub input_delay_steps: usize,
    pub feedback_delay_steps: usize,
    pub hidden_neurons: usize,
    /// Weight-decay coefficient on the mean-squared loss.
    pub l2_penalty: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub lm_initial_damping: f64,
    pub lm_damping_factor: f64,
    /// Use every `train_stride`-th regressor row for training (1 = all rows).
    pub train_stride: usize,
}

impl Default for NarxConfig {
    fn default() -> Self {
        NarxConfig {
            input_delay_steps: 1,
            feedback_delay_steps: 1,
            hidden_neurons: 10,
            l2_penalty: 1e-4,
            max_epochs: 100,
            seed: 0,
            lm_initial_damping: 1e-3,
            lm_damping_factor: 10.0,
            train_stride: 1,
        }
    }
}

/// Converts a delay in seconds to whole samples.
pub fn delay_steps(delay_s: f64, sample_rate: f64) -> usize {
    (delay_s * sample_rate).round().max(0.0) as usize
}

impl NarxConfig {
    /// Configuration with delays given in seconds.
    pub fn from_seconds(input_delay_s: f64, feedback_delay_s: f64, sample_rate: f64, hidden_neurons: usize) -> Self {
        NarxConfig {
            input_delay_steps: delay_steps(input_delay_s, sample_rate),
            feedback_delay_steps: delay_steps(feedback_delay_s, sample_rate),
            hidden_neurons,
            ..Default::default()
        }
    }

    /// Tuned turbine-speed network: 0.1 s input delay, 0.01 s feedback, 20 neurons.
    pub fn turbine_speed(sample_rate: f64) -> Self {
        Self::from_seconds(0.1, 0.01, sample_rate, 20)
    }

    /// Tuned outlet-temperature network: 2 s input delay, 0.01 s feedback, 14 neurons.
    pub fn outlet_temperature(sample_rate: f64) -> Self {
        Self::from_seconds(2.0, 0.01, sample_rate, 14)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if self.hidden_neurons == 0 {
            return bad("hidden_neurons must be at least 1");
        }
        if self.feedback_delay_steps == 0 {
            return bad("feedback delay must be at least one step");
        }
        if !(self.l2_penalty >= 0.0) {
            return bad("l2_penalty must be nonnegative");
        }
        if !(self.lm_initial_damping > 0.0) {
            return bad("lm_initial_damping must be positive");
        }
        if !(self.lm_damping_factor > 1.0) {
            return bad("lm_damping_factor must exceed 1");
        }
        if self.train_stride == 0 {
            return bad("train_stride must be at least 1");
        }
        Ok(())
    }

    /// First time index with a complete regressor.
    pub fn warmup(&self) -> usize {
        self.input_delay_steps.max(self.feedback_delay_steps)
    }
}

/// Single-hidden-layer network with a flat parameter vector laid out as
/// `[W (hidden x dim, row-major), b1 (hidden), w2 (hidden), b2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    hidden: usize,
    dim: usize,
    params: Vec<f64>,
}

impl Network {
    pub fn n_params(hidden: usize, dim: usize) -> usize {
        hidden * dim + 2 * hidden + 1
    }

    pub fn from_params(hidden: usize, dim: usize, params: Vec<f64>) -> Result<Self> {
        if params.len() != Self::n_params(hidden, dim) {
            return Err(Error::Shape(format!(
                "{} parameters for a {hidden}x{dim} network (expected {})",
                params.len(),
                Self::n_params(hidden, dim)
            )));
        }
        Ok(Network { hidden, dim, params })
    }

    /// Uniform initialization on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn initialize(hidden: usize, dim: usize, seed: u64) -> Self {
        let mut rng = SeededStream::new(seed);
        let in_bound = 1.0 / (dim.max(1) as f64).sqrt();
        let out_bound = 1.0 / (hidden as f64).sqrt();
        let mut params = Vec::with_capacity(Self::n_params(hidden, dim));
        for _ in 0..hidden * dim + hidden {
            params.push(rng.uniform(-in_bound, in_bound));
        }
        for _ in 0..hidden + 1 {
            params.push(rng.uniform(-out_bound, out_bound));
        }
        Network { hidden, dim, params }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn input_weights(&self) -> &[f64] {
        &self.params[..self.hidden * self.dim]
    }

    pub fn input_bias(&self) -> &[f64] {
        let o = self.hidden * self.dim;
        &self.params[o..o + self.hidden]
    }

    pub fn output_weights(&self) -> &[f64] {
        let o = self.hidden * self.dim + self.hidden;
        &self.params[o..o + self.hidden]
    }

    pub fn output_bias(&self) -> f64 {
        self.params[self.params.len() - 1]
    }

    /// Mask of parameters subject to weight decay (weights, not biases).
    fn decay_mask(&self) -> Vec<f64> {
        let (h, d) = (self.hidden, self.dim);
        let mut mask = vec![0.0; self.params.len()];
        mask[..h * d].fill(1.0);
        mask[h * d + h..h * d + 2 * h].fill(1.0);
        mask
    }

    fn activations(&self, x: &[f64], out: &mut [f64]) {
        let w = self.input_weights();
        let b = self.input_bias();
        for j in 0..self.hidden {
            let row = &w[j * self.dim..(j + 1) * self.dim];
            let a = row.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() + b[j];
            out[j] = a.tanh();
        }
    }

    /// Network output for one (normalized) regressor.
    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut h = vec![0.0; self.hidden];
        self.activations(x, &mut h);
        self.output_bias() + self.output_weights().iter().zip(&h).map(|(w, v)| w * v).sum::<f64>()
    }

    /// Outputs and the Jacobian of the outputs with respect to the parameters
    /// for every row of `inputs` (rows are regressors).
    pub fn jacobian(&self, inputs: &Matrix) -> (Vector, Matrix) {
        let (h, d) = (self.hidden, self.dim);
        let n = inputs.nrows();
        let mut outputs = Vector::zeros(n);
        let mut jac = Matrix::zeros(n, self.params.len());
        let mut act = vec![0.0; h];
        let mut x = vec![0.0; d];
        let w2 = self.output_weights().to_vec();
        for i in 0..n {
            for k in 0..d {
                x[k] = inputs[(i, k)];
            }
            self.activations(&x, &mut act);
            let mut y = self.output_bias();
            for j in 0..h {
                y += w2[j] * act[j];
                let delta = w2[j] * (1.0 - act[j] * act[j]);
                for k in 0..d {
                    jac[(i, j * d + k)] = delta * x[k];
                }
                jac[(i, h * d + j)] = delta;
                jac[(i, h * d + h + j)] = act[j];
            }
            jac[(i, h * d + 2 * h)] = 1.0;
            outputs[i] = y;
        }
        (outputs, jac)
    }

    fn outputs(&self, inputs: &Matrix) -> Vector {
        let mut x = vec![0.0; self.dim];
        Vector::from_fn(inputs.nrows(), |i, _| {
            for k in 0..self.dim {
                x[k] = inputs[(i, k)];
            }
            self.forward(&x)
        })
    }
}

/// Normalized regressors and targets for one output channel.
#[derive(Debug, Clone)]
pub struct Regressors {
    /// One row per target sample: `[y_{l-d_y}, u_{l-d_u} (all inputs)]`.
    pub inputs: Matrix,
    pub targets: Vector,
}

/// Training diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingReport {
    /// Objective (mean squared error plus weight decay) after each accepted step,
    /// starting with the initial network.
    pub accepted_losses: Vec<f64>,
    pub epochs: usize,
    pub stop_reason: String,
    pub n_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NarxModel {
    pub config: NarxConfig,
    pub network: Network,
    pub output_name: String,
    pub input_names: Vec<String>,
    pub output_stats: NormalizationStats,
    pub input_stats: NormalizationStats,
    pub sample_rate: f64,
}

fn stats_over(datasets: &[TimeSeriesDataset], names: &[String]) -> Result<NormalizationStats> {
    let segments: Vec<Vec<&[f64]>> = datasets
        .iter()
        .map(|d| names.iter().map(|n| d.values(n)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    NormalizationStats::from_segments(names, &segments)
}

/// Builds the regressor matrix for one dataset with the given statistics.
pub fn build_regressors_with_stats(
    dataset: &TimeSeriesDataset,
    config: &NarxConfig,
    output_name: &str,
    input_names: &[String],
    output_stats: &NormalizationStats,
    input_stats: &NormalizationStats,
) -> Result<Regressors> {
    let warmup = config.warmup();
    if dataset.len() <= warmup {
        return Err(Error::InsufficientData(format!(
            "dataset `{}` has {} samples but the delays need more than {warmup}",
            dataset.name,
            dataset.len()
        )));
    }
    let y = dataset.values(output_name)?;
    let us: Vec<&[f64]> = input_names.iter().map(|n| dataset.values(n)).collect::<Result<_>>()?;
    let rows = dataset.len() - warmup;
    let dim = 1 + input_names.len();
    let mut inputs = Matrix::zeros(rows, dim);
    let mut targets = Vector::zeros(rows);
    for (r, l) in (warmup..dataset.len()).enumerate() {
        inputs[(r, 0)] = output_stats.normalize(0, y[l - config.feedback_delay_steps]);
        for (i, u) in us.iter().enumerate() {
            inputs[(r, 1 + i)] = input_stats.normalize(i, u[l - config.input_delay_steps]);
        }
        targets[r] = output_stats.normalize(0, y[l]);
    }
    Ok(Regressors { inputs, targets })
}

/// Builds normalized regressors, computing statistics from this dataset.
pub fn build_regressors(
    dataset: &TimeSeriesDataset,
    config: &NarxConfig,
    output_name: &str,
    input_names: &[String],
) -> Result<(Regressors, NormalizationStats, NormalizationStats)> {
    let datasets = std::slice::from_ref(dataset);
    let output_stats = stats_over(datasets, &[output_name.to_string()])?;
    let input_stats = stats_over(datasets, input_names)?;
    let reg = build_regressors_with_stats(dataset, config, output_name, input_names, &output_stats, &input_stats)?;
    Ok((reg, output_stats, input_stats))
}

/// Objective `sum(r²) + N λ |w|²`; divide by `N` for the reported loss.
fn objective(net: &Network, reg: &Regressors, decay: &[f64], n_lambda: f64) -> f64 {
    let out = net.outputs(&reg.inputs);
    let sse = (out - &reg.targets).norm_squared();
    let penalty: f64 = net.params.iter().zip(decay).map(|(p, m)| m * p * p).sum();
    sse + n_lambda * penalty
}

/// Levenberg-Marquardt on pre-built regressors, starting from `net`.
pub fn train_network(net: Network, reg: &Regressors, config: &NarxConfig) -> Result<(Network, TrainingReport)> {
    config.validate()?;
    let mut net = net;
    let n = reg.inputs.nrows();
    if n == 0 {
        return Err(Error::InsufficientData("no training rows".into()));
    }
    let p = net.params.len();
    let decay = net.decay_mask();
    let n_lambda = n as f64 * config.l2_penalty;

    let mut loss = objective(&net, reg, &decay, n_lambda);
    if !loss.is_finite() {
        return Err(Error::TrainingDiverged { epoch: 0 });
    }
    let mut report = TrainingReport {
        accepted_losses: vec![loss / n as f64],
        n_rows: n,
        stop_reason: "max_epochs".into(),
        ..Default::default()
    };
    let mut mu = config.lm_initial_damping;

    'epochs: for epoch in 0..config.max_epochs {
        report.epochs = epoch + 1;
        let (out, jac) = net.jacobian(&reg.inputs);
        let resid = out - &reg.targets;
        let mut grad = jac.tr_mul(&resid);
        let mut hess = jac.tr_mul(&jac);
        for k in 0..p {
            grad[k] += n_lambda * decay[k] * net.params[k];
            hess[(k, k)] += n_lambda * decay[k];
        }
        if grad.norm() < GRADIENT_TOLERANCE {
            report.stop_reason = "gradient".into();
            break;
        }
        loop {
            let mut damped = hess.clone();
            for k in 0..p {
                damped[(k, k)] += mu;
            }
            let step = match damped.cholesky() {
                Some(ch) => Some(ch.solve(&(-&grad))),
                None => None,
            };
            if let Some(step) = step {
                let candidate = Network {
                    params: net.params.iter().zip(step.iter()).map(|(a, b)| a + b).collect(),
                    ..net.clone()
                };
                let cand_loss = objective(&candidate, reg, &decay, n_lambda);
                if !cand_loss.is_finite() && !loss.is_finite() {
                    return Err(Error::TrainingDiverged { epoch });
                }
                if cand_loss < loss {
                    net = candidate;
                    loss = cand_loss;
                    report.accepted_losses.push(loss / n as f64);
                    mu /= config.lm_damping_factor;
                    continue 'epochs;
                }
            }
            mu *= config.lm_damping_factor;
            if mu > MAX_DAMPING {
                report.stop_reason = "damping".into();
                break 'epochs;
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::TrainingDiverged { epoch: report.epochs });
    }
    log::debug!(
        "LM stopped after {} epochs ({}), loss {:.4e}",
        report.epochs,
        report.stop_reason,
        loss / n as f64
    );
    Ok((net, report))
}

fn stride_rows(reg: Regressors, stride: usize) -> Regressors {
    if stride <= 1 {
        return reg;
    }
    let idx: Vec<usize> = (0..reg.inputs.nrows()).step_by(stride).collect();
    Regressors {
        inputs: reg.inputs.select_rows(idx.iter()),
        targets: reg.targets.select_rows(idx.iter()),
    }
}

/// Trains one output channel's network on one or more datasets.
pub fn train(
    datasets: &[TimeSeriesDataset],
    config: &NarxConfig,
    output_name: &str,
    input_names: &[String],
) -> Result<(NarxModel, TrainingReport)> {
    config.validate()?;
    let sample_rate = datasets
        .first()
        .ok_or_else(|| Error::InsufficientData("no datasets supplied".into()))?
        .sample_rate();
    let output_stats = stats_over(datasets, &[output_name.to_string()])?;
    let input_stats = stats_over(datasets, input_names)?;
    let mut parts = Vec::with_capacity(datasets.len());
    for d in datasets {
        parts.push(build_regressors_with_stats(d, config, output_name, input_names, &output_stats, &input_stats)?);
    }
    let rows: usize = parts.iter().map(|r| r.inputs.nrows()).sum();
    let dim = 1 + input_names.len();
    let mut inputs = Matrix::zeros(rows, dim);
    let mut targets = Vector::zeros(rows);
    let mut at = 0;
    for part in &parts {
        let k = part.inputs.nrows();
        inputs.rows_mut(at, k).copy_from(&part.inputs);
        targets.rows_mut(at, k).copy_from(&part.targets);
        at += k;
    }
    let reg = stride_rows(Regressors { inputs, targets }, config.train_stride);
    let params = Network::n_params(config.hidden_neurons, dim);
    if reg.inputs.nrows() < params {
        log::warn!(
            "training `{output_name}` with {} rows for {params} parameters",
            reg.inputs.nrows()
        );
    }
    let net = Network::initialize(config.hidden_neurons, dim, config.seed);
    let (network, report) = train_network(net, &reg, config)?;
    Ok((
        NarxModel {
            config: config.clone(),
            network,
            output_name: output_name.to_string(),
            input_names: input_names.to_vec(),
            output_stats,
            input_stats,
            sample_rate,
        },
        report,
    ))
}

impl NarxModel {
    pub fn regressor_dim(&self) -> usize {
        self.network.dim()
    }

    /// Normalized network output for a normalized regressor.
    pub fn forward(&self, regressor: &[f64]) -> Result<f64> {
        if regressor.len() != self.regressor_dim() {
            return Err(Error::Shape(format!(
                "regressor has {} entries, network expects {}",
                regressor.len(),
                self.regressor_dim()
            )));
        }
        Ok(self.network.forward(regressor))
    }

    /// Network output converted back to physical units.
    pub fn forward_physical(&self, regressor: &[f64]) -> Result<f64> {
        Ok(self.output_stats.denormalize(0, self.forward(regressor)?))
    }

    /// Closed-loop rollout.
    ///
    /// `initial_history` holds measured outputs `y_0 .. y_{s-1}`; `inputs`
    /// column `l` holds `u_l` in physical units. Predicts `y_s .. y_{s+steps-1}`
    /// feeding each prediction back as the delayed output.
    pub fn simulate_closed_loop(&self, initial_history: &[f64], inputs: &Matrix, steps: usize) -> Result<Vec<f64>> {
        let s = initial_history.len();
        let fb = self.config.feedback_delay_steps;
        let id = self.config.input_delay_steps;
        if s < fb || s < id {
            return Err(Error::InsufficientData(format!(
                "history of {s} samples does not cover delays ({fb} feedback, {id} input)"
            )));
        }
        if inputs.nrows() != self.input_names.len() {
            return Err(Error::Shape(format!(
                "input matrix has {} rows, model has {} inputs",
                inputs.nrows(),
                self.input_names.len()
            )));
        }
        if inputs.ncols() + id < s + steps {
            return Err(Error::InsufficientData(format!(
                "{} input samples cannot drive {steps} steps after a history of {s}",
                inputs.ncols()
            )));
        }
        let mut y: Vec<f64> = initial_history.iter().map(|&v| self.output_stats.normalize(0, v)).collect();
        y.reserve(steps);
        let mut reg = vec![0.0; self.regressor_dim()];
        let mut out = Vec::with_capacity(steps);
        for l in s..s + steps {
            reg[0] = y[l - fb];
            for i in 0..self.input_names.len() {
                reg[1 + i] = self.input_stats.normalize(i, inputs[(i, l - id)]);
            }
            let next = self.network.forward(&reg);
            if !next.is_finite() {
                return Err(Error::Divergence { step: l - s });
            }
            y.push(next);
            out.push(self.output_stats.denormalize(0, next));
        }
        Ok(out)
    }

    /// Closed-loop prediction over a dataset after a measured warm-up of
    /// `warmup` samples (at least the model's own delays). Returns predictions
    /// for samples `warmup..len`.
    pub fn simulate_dataset(&self, data: &TimeSeriesDataset, warmup: usize) -> Result<Vec<f64>> {
        let y = data.values(&self.output_name)?;
        let inputs = data.matrix(&self.input_names)?;
        if warmup >= y.len() {
            return Err(Error::InsufficientData(format!(
                "warm-up of {warmup} samples leaves nothing to predict"
            )));
        }
        self.simulate_closed_loop(&y[..warmup], &inputs, y.len() - warmup)
    }

    pub fn to_model_file(&self) -> ModelFile {
        let c = &self.config;
        let mut f = ModelFile::new(
            MODEL_TAG,
            json!({
                "output_name": self.output_name,
                "input_names": self.input_names,
                "input_delay_steps": c.input_delay_steps,
                "feedback_delay_steps": c.feedback_delay_steps,
                "hidden_neurons": c.hidden_neurons,
                "max_epochs": c.max_epochs,
                "seed": c.seed,
                "train_stride": c.train_stride,
                "regressor_dim": self.network.dim(),
            }),
        );
        f.push_vector("params", self.network.params());
        f.push_scalar("l2_penalty", c.l2_penalty);
        f.push_scalar("lm_initial_damping", c.lm_initial_damping);
        f.push_scalar("lm_damping_factor", c.lm_damping_factor);
        f.push_scalar("sample_rate", self.sample_rate);
        f.push_vector("output_mean", &self.output_stats.mean);
        f.push_vector("output_std", &self.output_stats.std);
        f.push_vector("input_mean", &self.input_stats.mean);
        f.push_vector("input_std", &self.input_stats.std);
        f
    }

    pub fn from_model_file(f: &ModelFile) -> Result<Self> {
        let config = NarxConfig {
            input_delay_steps: f.meta_u64("input_delay_steps")? as usize,
            feedback_delay_steps: f.meta_u64("feedback_delay_steps")? as usize,
            hidden_neurons: f.meta_u64("hidden_neurons")? as usize,
            l2_penalty: f.scalar("l2_penalty")?,
            max_epochs: f.meta_u64("max_epochs")? as usize,
            seed: f.meta_u64("seed")?,
            lm_initial_damping: f.scalar("lm_initial_damping")?,
            lm_damping_factor: f.scalar("lm_damping_factor")?,
            train_stride: f.meta_u64("train_stride")? as usize,
        };
        let output_name = f.meta_str("output_name")?.to_string();
        let input_names = f.meta_strings("input_names")?;
        let dim = f.meta_u64("regressor_dim")? as usize;
        if dim != 1 + input_names.len() {
            return Err(Error::Malformed("regressor dimension disagrees with inputs".into()));
        }
        let network = Network::from_params(config.hidden_neurons, dim, f.vector("params")?)
            .map_err(|e| Error::Malformed(e.to_string()))?;
        Ok(NarxModel {
            network,
            output_stats: NormalizationStats {
                names: vec![output_name.clone()],
                mean: f.vector("output_mean")?,
                std: f.vector("output_std")?,
            },
            input_stats: NormalizationStats {
                names: input_names.clone(),
                mean: f.vector("input_mean")?,
                std: f.vector("input_std")?,
            },
            config,
            output_name,
            input_names,
            sample_rate: f.scalar("sample_rate")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_model_file().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_model_file(&ModelFile::load(path, MODEL_TAG)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Channel, ChannelRole};

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn dataset(channels: Vec<(&str, Vec<f64>)>, rate: f64) -> TimeSeriesDataset {
        TimeSeriesDataset::new(
            "d",
            rate,
            channels
                .into_iter()
                .map(|(n, v)| Channel::new(n, "", ChannelRole::Unassigned, v))
                .collect(),
        )
        .unwrap()
    }

    /// Telegraph input with random holds.
    fn telegraph(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = SeededStream::new(seed);
        let mut v = Vec::with_capacity(len);
        let mut level = 0.0;
        while v.len() < len {
            level = rng.uniform(-1.0, 1.0);
            let hold = rng.integer(1, 8);
            for _ in 0..hold {
                v.push(level);
            }
        }
        let _ = level;
        v.truncate(len);
        v
    }

    #[test]
    fn delays_from_seconds() {
        assert_eq!(NarxConfig::turbine_speed(100.0).input_delay_steps, 10);
        assert_eq!(NarxConfig::outlet_temperature(100.0).input_delay_steps, 200);
        assert_eq!(NarxConfig::turbine_speed(100.0).feedback_delay_steps, 1);
        assert_eq!(NarxConfig::turbine_speed(100.0).hidden_neurons, 20);
        assert_eq!(NarxConfig::outlet_temperature(100.0).hidden_neurons, 14);
    }

    #[test]
    fn regressor_taps() {
        let n = 300;
        let y: Vec<f64> = (0..n).map(|k| k as f64).collect();
        let u: Vec<f64> = (0..n).map(|k| 1000.0 + 2.0 * k as f64).collect();
        let d = dataset(vec![("y", y), ("u", u)], 100.0);
        for (cfg, tap) in [(NarxConfig::turbine_speed(100.0), 10), (NarxConfig::outlet_temperature(100.0), 200)] {
            let (reg, ys, us) = build_regressors(&d, &cfg, "y", &names(&["u"])).unwrap();
            assert_eq!(reg.inputs.nrows(), n - tap);
            for r in [0, 17, reg.inputs.nrows() - 1] {
                let l = r + tap;
                assert!((ys.denormalize(0, reg.targets[r]) - l as f64).abs() < 1e-9);
                assert!((ys.denormalize(0, reg.inputs[(r, 0)]) - (l - 1) as f64).abs() < 1e-9);
                let u_phys = us.denormalize(0, reg.inputs[(r, 1)]);
                assert!((u_phys - (1000.0 + 2.0 * (l - tap) as f64)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn short_dataset_rejected() {
        let d = dataset(vec![("y", vec![1.0, 2.0, 3.0]), ("u", vec![0.0, 1.0, 0.5])], 100.0);
        assert!(matches!(
            build_regressors(&d, &NarxConfig::turbine_speed(100.0), "y", &names(&["u"])),
            Err(Error::InsufficientData(_))
        ));
    }

    fn model_with(network: Network) -> NarxModel {
        NarxModel {
            config: NarxConfig {
                hidden_neurons: network.hidden(),
                ..Default::default()
            },
            output_name: "y".into(),
            input_names: (1..network.dim()).map(|i| format!("u{i}")).collect(),
            output_stats: NormalizationStats {
                names: names(&["y"]),
                mean: vec![500.0],
                std: vec![20.0],
            },
            input_stats: NormalizationStats {
                names: (1..network.dim()).map(|i| format!("u{i}")).collect(),
                mean: vec![0.0; network.dim() - 1],
                std: vec![1.0; network.dim() - 1],
            },
            network,
            sample_rate: 100.0,
        }
    }

    #[test]
    fn zero_weights_give_output_bias() {
        let mut p = vec![0.0; Network::n_params(4, 3)];
        *p.last_mut().unwrap() = 0.25;
        let m = model_with(Network::from_params(4, 3, p).unwrap());
        assert_eq!(m.forward_physical(&[0.3, -2.0, 1.0]).unwrap(), 500.0 + 0.25 * 20.0);
        assert!(matches!(m.forward(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn linear_regime_matches_taylor_expansion() {
        let base = Network::initialize(5, 3, 12);
        let (h, d) = (5, 3);
        let mut p = base.params().to_vec();
        // scale hidden pre-activations into the linear regime
        for v in &mut p[..h * d + h] {
            *v *= 1e-6;
        }
        let net = Network::from_params(h, d, p).unwrap();
        let x = [0.7, -1.3, 0.4];
        // tanh(a) ≈ a for |a| ~ 1e-6: y ≈ b2 + Σ w2_j (W_j·x + b1_j)
        let mut affine = net.output_bias();
        for j in 0..h {
            let a: f64 = (0..d).map(|k| net.input_weights()[j * d + k] * x[k]).sum::<f64>() + net.input_bias()[j];
            affine += net.output_weights()[j] * a;
        }
        assert!((net.forward(&x) - affine).abs() < 1e-8);
    }

    #[test]
    fn forward_matches_scalar_loop() {
        let net = Network::initialize(7, 4, 3);
        let x = [0.1, -0.4, 2.0, 0.9];
        let w = net.input_weights();
        let mut y = net.output_bias();
        for j in 0..7 {
            let mut a = net.input_bias()[j];
            for k in 0..4 {
                a += w[j * 4 + k] * x[k];
            }
            y += net.output_weights()[j] * a.tanh();
        }
        assert!((net.forward(&x) - y).abs() < 1e-12);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = SeededStream::new(31);
        let net = Network::initialize(5, 3, 8);
        let inputs = Matrix::from_fn(20, 3, |_, _| rng.uniform(-2.0, 2.0));
        let (_, jac) = net.jacobian(&inputs);
        let h = 1e-6;
        for k in 0..net.params().len() {
            let mut plus = net.params().to_vec();
            let mut minus = net.params().to_vec();
            plus[k] += h;
            minus[k] -= h;
            let fp = Network::from_params(5, 3, plus).unwrap().outputs(&inputs);
            let fm = Network::from_params(5, 3, minus).unwrap().outputs(&inputs);
            for i in 0..20 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                let scale = jac[(i, k)].abs().max(1.0);
                assert!((fd - jac[(i, k)]).abs() / scale < 1e-6, "param {k} row {i}");
            }
        }
    }

    fn nonlinear_ar(len: usize, seed: u64) -> TimeSeriesDataset {
        let u = telegraph(len, seed);
        let mut y = vec![0.0; len];
        for l in 1..len {
            y[l] = 0.8 * y[l - 1] + 0.3 * u[l - 1] + 0.1 * (2.0 * y[l - 1]).tanh();
        }
        let y = y.into_iter().map(|v| v + 5.0).collect();
        dataset(vec![("y", y), ("u", u)], 100.0)
    }

    #[test]
    fn learns_nonlinear_ar_process() {
        let d = nonlinear_ar(2000, 1);
        let cfg = NarxConfig {
            hidden_neurons: 8,
            max_epochs: 60,
            ..Default::default()
        };
        let (model, report) = train(std::slice::from_ref(&d), &cfg, "y", &names(&["u"])).unwrap();
        let (reg, _, _) = build_regressors(&d, &cfg, "y", &names(&["u"])).unwrap();
        let pred = model.network.outputs(&reg.inputs);
        let rmse = ((pred - &reg.targets).norm_squared() / reg.targets.len() as f64).sqrt();
        // targets are normalized, so σ = 1 (up to the dropped warm-up row)
        assert!(rmse < 0.05, "teacher-forced rmse {rmse}");
        assert!(report.accepted_losses.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_epochs_returns_initial_network() {
        let d = nonlinear_ar(200, 2);
        let cfg = NarxConfig {
            max_epochs: 0,
            hidden_neurons: 3,
            seed: 77,
            ..Default::default()
        };
        let (model, report) = train(&[d], &cfg, "y", &names(&["u"])).unwrap();
        assert_eq!(model.network, Network::initialize(3, 2, 77));
        assert_eq!(report.accepted_losses.len(), 1);
    }

    #[test]
    fn training_is_reproducible() {
        let d = nonlinear_ar(500, 3);
        let cfg = NarxConfig {
            hidden_neurons: 4,
            max_epochs: 15,
            ..Default::default()
        };
        let (a, _) = train(std::slice::from_ref(&d), &cfg, "y", &names(&["u"])).unwrap();
        let (b, _) = train(&[d], &cfg, "y", &names(&["u"])).unwrap();
        assert!(a.network.params().iter().zip(b.network.params()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn invalid_config_rejected() {
        let d = nonlinear_ar(100, 1);
        for cfg in [
            NarxConfig { hidden_neurons: 0, ..Default::default() },
            NarxConfig { feedback_delay_steps: 0, ..Default::default() },
            NarxConfig { lm_damping_factor: 1.0, ..Default::default() },
        ] {
            assert!(train(std::slice::from_ref(&d), &cfg, "y", &names(&["u"])).is_err());
        }
    }

    #[test]
    fn closed_loop_requires_history() {
        let m = model_with(Network::initialize(2, 2, 0));
        assert!(m.simulate_closed_loop(&[], &Matrix::zeros(1, 10), 5).is_err());
        let out = m.simulate_closed_loop(&[500.0], &Matrix::zeros(1, 10), 9).unwrap();
        assert_eq!(out.len(), 9);
    }

    #[test]
    fn save_load_round_trip() {
        let d = nonlinear_ar(300, 4);
        let cfg = NarxConfig {
            hidden_neurons: 3,
            max_epochs: 5,
            input_delay_steps: 2,
            ..Default::default()
        };
        let (model, _) = train(std::slice::from_ref(&d), &cfg, "y", &names(&["u"])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.ktm");
        model.save(&path).unwrap();
        let back = NarxModel::load(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.simulate_dataset(&d, 2).unwrap(), model.simulate_dataset(&d, 2).unwrap());
    }
}
