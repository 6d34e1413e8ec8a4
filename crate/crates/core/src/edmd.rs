//! Extended dynamic mode decomposition with inputs.
//!
//! Pipeline: z-score the states, lift them with a [`DictionarySpec`], regress
//! `[A, B]` from snapshot pairs, then roll the lifted linear model forward
//! from a single lifted initial condition.

use std::path::Path;

use serde_json::json;

use crate::container::ModelFile;
use crate::dataset::TimeSeriesDataset;
use crate::dictionary::{DictionaryFamily, DictionarySpec};
use crate::error::{Error, Result};
use crate::linalg::{solve_stacked_regression_ridge, Matrix, Vector};

const MODEL_TAG: [u8; 4] = *b"EDMD";

/// Per-channel z-score statistics. Standard deviations use the `N - 1` divisor.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    /// Computes statistics over the concatenation of `rows` (one slice per
    /// segment and channel: `segments[s][c]`).
    pub fn from_segments(names: &[String], segments: &[Vec<&[f64]>]) -> Result<Self> {
        let mut mean = Vec::with_capacity(names.len());
        let mut std = Vec::with_capacity(names.len());
        for (c, name) in names.iter().enumerate() {
            let count: usize = segments.iter().map(|s| s[c].len()).sum();
            if count < 2 {
                return Err(Error::InsufficientData(format!(
                    "channel `{name}` needs at least two samples for normalization"
                )));
            }
            let mu = segments.iter().flat_map(|s| s[c].iter()).sum::<f64>() / count as f64;
            let ss = segments
                .iter()
                .flat_map(|s| s[c].iter())
                .map(|v| (v - mu) * (v - mu))
                .sum::<f64>();
            let sigma = (ss / (count - 1) as f64).sqrt();
            if !(sigma > 0.0) || !sigma.is_finite() {
                return Err(Error::DegenerateChannel(name.clone()));
            }
            mean.push(mu);
            std.push(sigma);
        }
        Ok(NormalizationStats {
            names: names.to_vec(),
            mean,
            std,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, channel: usize, v: f64) -> f64 {
        (v - self.mean[channel]) / self.std[channel]
    }

    pub fn denormalize(&self, channel: usize, v: f64) -> f64 {
        v * self.std[channel] + self.mean[channel]
    }

    /// Normalizes each row of `m` in place (row `i` is channel `i`).
    pub fn normalize_rows(&self, m: &mut Matrix) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                m[(i, j)] = self.normalize(i, m[(i, j)]);
            }
        }
    }

    pub fn denormalize_rows(&self, m: &mut Matrix) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                m[(i, j)] = self.denormalize(i, m[(i, j)]);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SnapshotOptions {
    /// Z-score the inputs as well as the states.
    pub normalize_inputs: bool,
}

/// Snapshot matrices `X`, `Y`, `U` with the statistics used to build them.
#[derive(Debug, Clone)]
pub struct SnapshotMatrices {
    pub x: Matrix,
    pub y: Matrix,
    pub u: Matrix,
    pub stats: NormalizationStats,
    pub input_stats: Option<NormalizationStats>,
    pub state_names: Vec<String>,
    pub input_names: Vec<String>,
    pub sample_rate: f64,
}

impl SnapshotMatrices {
    pub fn n_samples(&self) -> usize {
        self.x.ncols()
    }
}

fn collect_segments<'a>(
    datasets: &'a [TimeSeriesDataset],
    names: &[String],
) -> Result<Vec<Vec<&'a [f64]>>> {
    datasets
        .iter()
        .map(|d| names.iter().map(|n| d.values(n)).collect::<Result<Vec<_>>>())
        .collect()
}

fn common_sample_rate(datasets: &[TimeSeriesDataset]) -> Result<f64> {
    let first = datasets
        .first()
        .ok_or_else(|| Error::InsufficientData("no datasets supplied".into()))?;
    let rate = first.sample_rate();
    if let Some(d) = datasets.iter().find(|d| d.sample_rate() != rate) {
        return Err(Error::Schema(format!(
            "dataset `{}` is sampled at {} Hz but `{}` at {rate} Hz",
            d.name,
            d.sample_rate(),
            first.name
        )));
    }
    Ok(rate)
}

/// Builds normalized snapshot pairs from one or more datasets.
///
/// Statistics are computed over all datasets together; pairs never straddle
/// a dataset boundary.
pub fn build_snapshots(
    datasets: &[TimeSeriesDataset],
    state_names: &[String],
    input_names: &[String],
) -> Result<SnapshotMatrices> {
    build_snapshots_with(datasets, state_names, input_names, SnapshotOptions::default())
}

pub fn build_snapshots_with(
    datasets: &[TimeSeriesDataset],
    state_names: &[String],
    input_names: &[String],
    options: SnapshotOptions,
) -> Result<SnapshotMatrices> {
    common_sample_rate(datasets)?;
    let state_segments = collect_segments(datasets, state_names)?;
    let stats = NormalizationStats::from_segments(state_names, &state_segments)?;
    let input_stats = if options.normalize_inputs {
        let input_segments = collect_segments(datasets, input_names)?;
        Some(NormalizationStats::from_segments(input_names, &input_segments)?)
    } else {
        None
    };
    build_snapshots_with_stats(datasets, state_names, input_names, stats, input_stats)
}

/// Builds snapshot pairs normalized with previously computed statistics.
pub fn build_snapshots_with_stats(
    datasets: &[TimeSeriesDataset],
    state_names: &[String],
    input_names: &[String],
    stats: NormalizationStats,
    input_stats: Option<NormalizationStats>,
) -> Result<SnapshotMatrices> {
    let sample_rate = common_sample_rate(datasets)?;
    if stats.dim() != state_names.len() {
        return Err(Error::Shape("state statistics do not match state channels".into()));
    }
    if let Some(is) = &input_stats {
        if is.dim() != input_names.len() {
            return Err(Error::Shape("input statistics do not match input channels".into()));
        }
    }
    let state_segments = collect_segments(datasets, state_names)?;
    let input_segments = collect_segments(datasets, input_names)?;

    let n = state_names.len();
    let m = input_names.len();
    let total: usize = datasets.iter().map(|d| d.len() - 1).sum();
    let mut x = Matrix::zeros(n, total);
    let mut y = Matrix::zeros(n, total);
    let mut u = Matrix::zeros(m, total);

    let mut col = 0;
    for ((states, inputs), d) in state_segments.iter().zip(&input_segments).zip(datasets) {
        for l in 0..d.len() - 1 {
            for (i, s) in states.iter().enumerate() {
                x[(i, col)] = stats.normalize(i, s[l]);
                y[(i, col)] = stats.normalize(i, s[l + 1]);
            }
            for (i, s) in inputs.iter().enumerate() {
                u[(i, col)] = match &input_stats {
                    Some(is) => is.normalize(i, s[l]),
                    None => s[l],
                };
            }
            col += 1;
        }
    }
    Ok(SnapshotMatrices {
        x,
        y,
        u,
        stats,
        input_stats,
        state_names: state_names.to_vec(),
        input_names: input_names.to_vec(),
        sample_rate,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FitOptions {
    /// Singular-value cutoff; 0 selects the default.
    pub rank_tolerance: f64,
    /// Tikhonov damping of the stacked regression; 0 disables it.
    pub ridge: f64,
}

/// Lifted linear model `z' = A z + B u`, `y = C z`.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub dictionary: DictionarySpec,
    pub stats: NormalizationStats,
    pub input_stats: Option<NormalizationStats>,
    pub state_names: Vec<String>,
    pub input_names: Vec<String>,
    pub sample_rate: f64,
}

/// `[I_n | 0]`, reading the state block out of a lifted vector.
pub fn state_selector(n: usize, lifted_dim: usize) -> Matrix {
    Matrix::from_fn(n, lifted_dim, |i, j| if i == j { 1.0 } else { 0.0 })
}

/// Fits `[A, B] = Y_lift [X_lift; U]^+`.
pub fn fit(snapshots: &SnapshotMatrices, dict: &DictionarySpec, rank_tolerance: f64) -> Result<KoopmanModel> {
    fit_with(
        snapshots,
        dict,
        FitOptions {
            rank_tolerance,
            ridge: 0.0,
        },
    )
}

pub fn fit_with(snapshots: &SnapshotMatrices, dict: &DictionarySpec, options: FitOptions) -> Result<KoopmanModel> {
    let n = snapshots.x.nrows();
    if dict.state_dim() != n {
        return Err(Error::Shape(format!(
            "dictionary expects {}-dimensional states but snapshots have {n}",
            dict.state_dim()
        )));
    }
    let x_lift = dict.lift_batch(&snapshots.x)?;
    let y_lift = dict.lift_batch(&snapshots.y)?;
    let solution = solve_stacked_regression_ridge(
        &y_lift,
        &x_lift,
        &snapshots.u,
        options.rank_tolerance,
        options.ridge,
    )?;
    let lifted_dim = dict.lifted_dim();
    let (a, b) = solution.split(lifted_dim);
    log::debug!(
        "fitted {} model: N_l = {lifted_dim}, rank {} of {}, lifted residual {:.3e}",
        dict.family().name(),
        solution.effective_rank,
        lifted_dim + snapshots.u.nrows(),
        solution.residual_norm
    );
    Ok(KoopmanModel {
        a,
        b,
        c: state_selector(n, lifted_dim),
        dictionary: dict.clone(),
        stats: snapshots.stats.clone(),
        input_stats: snapshots.input_stats.clone(),
        state_names: snapshots.state_names.clone(),
        input_names: snapshots.input_names.clone(),
        sample_rate: snapshots.sample_rate,
    })
}

impl KoopmanModel {
    /// Assembles a model from explicit matrices, checking dimensions.
    pub fn from_parts(
        a: Matrix,
        b: Matrix,
        dictionary: DictionarySpec,
        stats: NormalizationStats,
        input_names: Vec<String>,
        sample_rate: f64,
    ) -> Result<Self> {
        let nl = dictionary.lifted_dim();
        let n = dictionary.state_dim();
        if a.shape() != (nl, nl) || b.nrows() != nl || b.ncols() != input_names.len() || stats.dim() != n {
            return Err(Error::Shape(format!(
                "A {:?}, B {:?} inconsistent with N_l = {nl}, m = {}, n = {n}",
                a.shape(),
                b.shape(),
                input_names.len()
            )));
        }
        Ok(KoopmanModel {
            a,
            b,
            c: state_selector(n, nl),
            dictionary,
            state_names: stats.names.clone(),
            stats,
            input_stats: None,
            input_names,
            sample_rate,
        })
    }

    pub fn lifted_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// `A z + B u`.
    pub fn predict_step(&self, z: &Vector, u: &Vector) -> Result<Vector> {
        if z.len() != self.lifted_dim() || u.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "predict_step got z of length {} and u of length {}; expected {} and {}",
                z.len(),
                u.len(),
                self.lifted_dim(),
                self.input_dim()
            )));
        }
        Ok(&self.a * z + &self.b * u)
    }

    fn model_input(&self, inputs: &Matrix, l: usize) -> Vector {
        let mut u = inputs.column(l).into_owned();
        if let Some(is) = &self.input_stats {
            for (i, v) in u.iter_mut().enumerate() {
                *v = is.normalize(i, *v);
            }
        }
        u
    }

    fn check_sim_args(&self, x0: &[f64], inputs: &Matrix) -> Result<()> {
        if x0.len() != self.state_dim() {
            return Err(Error::Shape(format!(
                "initial state has {} entries, model has {} states",
                x0.len(),
                self.state_dim()
            )));
        }
        if inputs.nrows() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input matrix has {} rows, model has {} inputs",
                inputs.nrows(),
                self.input_dim()
            )));
        }
        if inputs.ncols() == 0 {
            return Err(Error::InvalidInput("simulation needs at least one step".into()));
        }
        crate::linalg::ensure_finite(inputs, "inputs")
    }

    fn lift_physical(&self, x: &[f64]) -> Result<Vector> {
        let normalized: Vec<f64> = x.iter().enumerate().map(|(i, &v)| self.stats.normalize(i, v)).collect();
        Ok(Vector::from_vec(self.dictionary.lift(&normalized)?))
    }

    /// Pure lifted rollout: `x0` is lifted once and the lifted state is then
    /// propagated linearly. Returns the physical-unit trajectory
    /// `ŷ_0 .. ŷ_{T-1}` where `T = inputs.ncols()` and `ŷ_0 = x0`.
    pub fn simulate(&self, x0: &[f64], inputs: &Matrix) -> Result<Matrix> {
        self.check_sim_args(x0, inputs)?;
        let steps = inputs.ncols();
        let mut out = Matrix::zeros(self.state_dim(), steps);
        let mut z = self.lift_physical(x0)?;
        for l in 0..steps {
            let y = &self.c * &z;
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step: l });
            }
            out.set_column(l, &y);
            if l + 1 < steps {
                let u = self.model_input(inputs, l);
                z = &self.a * &z + &self.b * &u;
                if z.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence { step: l + 1 });
                }
            }
        }
        self.stats.denormalize_rows(&mut out);
        Ok(out)
    }

    /// Diagnostic rollout that re-lifts the predicted state every step.
    pub fn simulate_relifted(&self, x0: &[f64], inputs: &Matrix) -> Result<Matrix> {
        self.check_sim_args(x0, inputs)?;
        let steps = inputs.ncols();
        let mut out = Matrix::zeros(self.state_dim(), steps);
        let mut z = self.lift_physical(x0)?;
        for l in 0..steps {
            let y = &self.c * &z;
            out.set_column(l, &y);
            if l + 1 < steps {
                let u = self.model_input(inputs, l);
                let next = &self.c * (&self.a * &z + &self.b * &u);
                if next.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence { step: l + 1 });
                }
                z = Vector::from_vec(self.dictionary.lift(next.as_slice())?);
            }
        }
        self.stats.denormalize_rows(&mut out);
        Ok(out)
    }

    /// Simulates over a whole dataset starting from its first recorded state.
    pub fn simulate_dataset(&self, data: &TimeSeriesDataset) -> Result<Matrix> {
        let states = data.matrix(&self.state_names)?;
        let inputs = data.matrix(&self.input_names)?;
        let x0: Vec<f64> = states.column(0).iter().copied().collect();
        self.simulate(&x0, &inputs)
    }

    /// Frobenius norm of `C (A X_lift + B U) - Y` in normalized units.
    pub fn one_step_residual(&self, snapshots: &SnapshotMatrices) -> Result<f64> {
        let x_lift = self.dictionary.lift_batch(&snapshots.x)?;
        let pred = &self.c * (&self.a * x_lift + &self.b * &snapshots.u);
        Ok((pred - &snapshots.y).norm())
    }

    /// Largest eigenvalue magnitude of `A`.
    pub fn spectral_radius(&self) -> f64 {
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|l| l.norm())
            .fold(0.0, f64::max)
    }

    pub fn to_model_file(&self) -> ModelFile {
        let d = &self.dictionary;
        let mut f = ModelFile::new(
            MODEL_TAG,
            json!({
                "family": d.family().name(),
                "state_dim": d.state_dim(),
                "polynomial_degree": d.polynomial_degree(),
                "seed": d.seed(),
                "state_names": self.state_names,
                "input_names": self.input_names,
                "normalize_inputs": self.input_stats.is_some(),
            }),
        );
        f.push("A", self.a.clone());
        f.push("B", self.b.clone());
        f.push("C", self.c.clone());
        let centers = d.centers();
        f.push(
            "centers",
            Matrix::from_fn(centers.len(), d.state_dim(), |i, j| centers[i][j]),
        );
        f.push_scalar("shape_parameter", d.shape_parameter());
        f.push_vector("center_bounds", &[d.center_bounds().0, d.center_bounds().1]);
        f.push_scalar("sample_rate", self.sample_rate);
        f.push_vector("state_mean", &self.stats.mean);
        f.push_vector("state_std", &self.stats.std);
        if let Some(is) = &self.input_stats {
            f.push_vector("input_mean", &is.mean);
            f.push_vector("input_std", &is.std);
        }
        f
    }

    pub fn from_model_file(f: &ModelFile) -> Result<Self> {
        let family: DictionaryFamily = f.meta_str("family")?.parse()?;
        let state_dim = f.meta_u64("state_dim")? as usize;
        let degree = f.meta_u64("polynomial_degree")? as usize;
        let seed = f.meta_u64("seed")?;
        let state_names = f.meta_strings("state_names")?;
        let input_names = f.meta_strings("input_names")?;
        let bounds = f.vector("center_bounds")?;
        if bounds.len() != 2 {
            return Err(Error::Malformed("center_bounds must have two entries".into()));
        }
        let centers_m = f.array("centers")?;
        let dictionary = match family {
            DictionaryFamily::IdentityOnly => DictionarySpec::identity(state_dim),
            DictionaryFamily::Polynomial => DictionarySpec::polynomial(state_dim, degree)?,
            fam => {
                let centers = (0..centers_m.nrows())
                    .map(|i| centers_m.row(i).iter().copied().collect())
                    .collect();
                DictionarySpec::with_centers(fam, state_dim, centers, f.scalar("shape_parameter")?)?
            }
        }
        .with_provenance((bounds[0], bounds[1]), seed);

        let stats = NormalizationStats {
            names: state_names.clone(),
            mean: f.vector("state_mean")?,
            std: f.vector("state_std")?,
        };
        let input_stats = if f.meta.get("normalize_inputs").and_then(|v| v.as_bool()) == Some(true) {
            Some(NormalizationStats {
                names: input_names.clone(),
                mean: f.vector("input_mean")?,
                std: f.vector("input_std")?,
            })
        } else {
            None
        };
        let model = KoopmanModel {
            a: f.array("A")?.clone(),
            b: f.array("B")?.clone(),
            c: f.array("C")?.clone(),
            dictionary,
            stats,
            input_stats,
            state_names,
            input_names,
            sample_rate: f.scalar("sample_rate")?,
        };
        let nl = model.dictionary.lifted_dim();
        if model.a.shape() != (nl, nl)
            || model.b.shape() != (nl, model.input_names.len())
            || model.c.shape() != (state_dim, nl)
            || model.stats.dim() != state_dim
        {
            return Err(Error::Malformed("matrix dimensions are inconsistent".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_model_file().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_model_file(&ModelFile::load(path, MODEL_TAG)?)
    }
}
