//! The `kturb` workflows. Every command validates its configuration fully
//! before touching data and writes only under the configured output
//! directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use koopman_turbine::dictionary::DictionarySpec;
use koopman_turbine::edmd::{self, FitOptions, SnapshotMatrices, SnapshotOptions};
use koopman_turbine::metrics::{evaluate_channels, MetricReport, ResultsTable};
use koopman_turbine::surrogate::{self, IntegrateOptions, PlantParams};
use koopman_turbine::{narx, DictionaryFamily, KoopmanModel, NarxModel, TimeSeriesDataset};
use rayon::prelude::*;

use crate::config::{RunConfig, TEST_FILES, TRAIN_FILES};
use crate::error::CliError;

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents).map_err(|e| CliError::Other(format!("cannot write {}: {e}", path.display())))
}

/// Saves the effective configuration next to a command's outputs.
fn record_config(config: &RunConfig, dir: &Path, command: &str) -> Result<(), CliError> {
    write_file(&dir.join(format!("{command}.config.toml")), &config.to_toml())
}

/// Reads the listed CSV files and tags the configured channels.
pub fn load_datasets(config: &RunConfig, paths: &[PathBuf]) -> Result<Vec<TimeSeriesDataset>, CliError> {
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let mut d = TimeSeriesDataset::read_csv(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        d.assign_roles(&config.data.states, &config.data.inputs)
            .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        out.push(d);
    }
    if let Some(first) = out.first() {
        if let Some(d) = out.iter().find(|d| d.sample_rate() != first.sample_rate()) {
            return Err(CliError::Data(format!(
                "`{}` is sampled at {} Hz but `{}` at {} Hz",
                d.name,
                d.sample_rate(),
                first.name,
                first.sample_rate()
            )));
        }
    }
    Ok(out)
}

/// Simulates the surrogate plant and writes the training and test cycles.
pub fn gen_data(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    config.validate()?;
    let g = &config.generate;
    let options = IntegrateOptions {
        substeps: g.substeps,
        noise_std: (g.noise_speed_rpm, g.noise_temperature_k),
        initial_state: None,
    };
    let cycles = surrogate::make_duty_cycles_with(&PlantParams::default(), config.seed, g.sample_rate, &options)?;
    let dir = config.data_dir();
    fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    let all = cycles
        .train
        .iter()
        .zip(TRAIN_FILES)
        .chain([(&cycles.transient_test, TEST_FILES[0]), (&cycles.steady_test, TEST_FILES[1])]);
    for (data, file) in all {
        let path = dir.join(file);
        data.write_csv(&path)?;
        log::info!("wrote {} ({} samples)", path.display(), data.len());
        written.push(path);
    }
    record_config(config, &config.out_dir, "gen-data")?;
    Ok(written)
}

/// Builds the dictionary for `n_centers` (ignored by non-radial families).
pub fn build_dictionary(config: &RunConfig, snapshots: &SnapshotMatrices, n_centers: usize) -> Result<DictionarySpec, CliError> {
    let d = &config.dictionary;
    let n = snapshots.x.nrows();
    let spec = match d.family {
        DictionaryFamily::IdentityOnly => DictionarySpec::identity(n),
        DictionaryFamily::Polynomial => DictionarySpec::polynomial(n, d.polynomial_degree)?,
        family => {
            let bounds = match config.fixed_bounds() {
                Some(b) => b,
                None => {
                    let lo = snapshots.x.min();
                    let hi = snapshots.x.max();
                    if !(lo < hi) {
                        return Err(CliError::Data("normalized training states span no interval".into()));
                    }
                    log::info!("automatic center bounds [{lo}, {hi}]");
                    (lo, hi)
                }
            };
            DictionarySpec::radial(family, n, n_centers, bounds, config.seed, d.shape_parameter)?
        }
    };
    Ok(spec)
}

/// Per-dataset one-step residuals of `model`, in normalized units, plus the
/// residual over all datasets together.
pub fn residual_rows(model: &KoopmanModel, datasets: &[TimeSeriesDataset]) -> Result<Vec<(String, usize, f64)>, CliError> {
    let mut rows = Vec::with_capacity(datasets.len() + 1);
    let snapshots = |ds: &[TimeSeriesDataset]| {
        edmd::build_snapshots_with_stats(
            ds,
            &model.state_names,
            &model.input_names,
            model.stats.clone(),
            model.input_stats.clone(),
        )
    };
    for d in datasets {
        let s = snapshots(std::slice::from_ref(d))?;
        rows.push((d.name.clone(), s.n_samples(), model.one_step_residual(&s)?));
    }
    if datasets.len() > 1 {
        let s = snapshots(datasets)?;
        rows.push(("all".to_string(), s.n_samples(), model.one_step_residual(&s)?));
    }
    Ok(rows)
}

fn residual_csv(rows: &[(String, usize, f64)]) -> String {
    let mut out = String::from("dataset,n_pairs,one_step_residual\n");
    for (name, n, r) in rows {
        let _ = writeln!(out, "{name},{n},{r}");
    }
    out
}

/// Fitted model with its training residuals.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: KoopmanModel,
    pub residuals: Vec<(String, usize, f64)>,
}

fn fit_model(config: &RunConfig, train: &[TimeSeriesDataset], n_centers: usize) -> Result<FitOutcome, CliError> {
    let snapshots = edmd::build_snapshots_with(
        train,
        &config.data.states,
        &config.data.inputs,
        SnapshotOptions {
            normalize_inputs: config.dictionary.normalize_inputs,
        },
    )?;
    let dict = build_dictionary(config, &snapshots, n_centers)?;
    let model = edmd::fit_with(
        &snapshots,
        &dict,
        FitOptions {
            rank_tolerance: config.fit.rank_tolerance,
            ridge: config.fit.ridge,
        },
    )?;
    let residuals = residual_rows(&model, train)?;
    Ok(FitOutcome { model, residuals })
}

/// Fits the lifted linear model and writes it with its training report.
pub fn fit(config: &RunConfig) -> Result<FitOutcome, CliError> {
    config.validate()?;
    let paths = config.train_paths();
    RunConfig::check_files(&paths)?;
    let train = load_datasets(config, &paths)?;
    let outcome = fit_model(config, &train, config.dictionary.n_centers)?;
    fs::create_dir_all(&config.out_dir)?;
    outcome.model.save(&config.edmd_model_path())?;
    write_file(&config.out_dir.join("fit_report.csv"), &residual_csv(&outcome.residuals))?;
    record_config(config, &config.out_dir, "fit")?;
    log::info!(
        "fitted {} with N_l = {}, spectral radius {:.6}",
        outcome.model.dictionary.family().name(),
        outcome.model.lifted_dim(),
        outcome.model.spectral_radius()
    );
    Ok(outcome)
}

/// Trains one network per configured output and writes the model files.
pub fn fit_narx(config: &RunConfig) -> Result<Vec<(NarxModel, narx::TrainingReport)>, CliError> {
    config.validate()?;
    let paths = config.train_paths();
    RunConfig::check_files(&paths)?;
    let train = load_datasets(config, &paths)?;
    let rate = train[0].sample_rate();
    let results: Vec<Result<_, CliError>> = config
        .narx
        .outputs
        .par_iter()
        .map(|o| {
            let nc = config.narx_config(o, rate);
            let (model, report) = narx::train(&train, &nc, &o.channel, &config.data.inputs)?;
            log::info!(
                "trained `{}`: {} epochs, loss {:.4e}, {}",
                o.channel,
                report.epochs,
                report.accepted_losses.last().copied().unwrap_or(f64::NAN),
                report.stop_reason
            );
            Ok((model, report))
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    fs::create_dir_all(&config.out_dir)?;
    let mut report = String::from("channel,epochs,n_rows,initial_loss,final_loss,stop_reason\n");
    for (model, r) in &results {
        model.save(&config.narx_model_path(&model.output_name))?;
        let _ = writeln!(
            report,
            "{},{},{},{},{},{}",
            model.output_name,
            r.epochs,
            r.n_rows,
            r.accepted_losses.first().copied().unwrap_or(f64::NAN),
            r.accepted_losses.last().copied().unwrap_or(f64::NAN),
            r.stop_reason
        );
    }
    write_file(&config.out_dir.join("narx_report.csv"), &report)?;
    record_config(config, &config.out_dir, "fit-narx")?;
    Ok(results)
}

/// One row of an evaluation: method and metrics on one channel of one record.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRow {
    pub dataset: String,
    pub method: String,
    pub report: MetricReport,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub rows: Vec<EvaluationRow>,
    /// EDMD one-step residual per record.
    pub residuals: Vec<(String, usize, f64)>,
    pub warmup: usize,
}

fn metrics_csv(rows: &[EvaluationRow]) -> String {
    let mut out = String::from("dataset,method,channel,nrmse,nrmse_measured_mean,r_squared,mape,n_points\n");
    for r in rows {
        let m = &r.report;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.dataset, r.method, m.channel, m.nrmse, m.nrmse_measured_mean, m.r_squared, m.mape, m.n_points
        );
    }
    out
}

/// Comparison tables, one per record, sectioned by channel.
pub fn metrics_text(rows: &[EvaluationRow], states: &[String]) -> String {
    let mut datasets: Vec<&str> = Vec::new();
    for r in rows {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
    }
    let mut out = String::new();
    for (i, d) in datasets.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let mut table = ResultsTable::new(format!("Validation on `{d}`"));
        for ch in states {
            for r in rows.iter().filter(|r| r.dataset == *d && &r.report.channel == ch) {
                table.push(ch.as_str(), method_label(&r.method), r.report.clone());
            }
        }
        out.push_str(&table.to_text());
    }
    out
}

fn method_label(method: &str) -> &str {
    match method {
        "edmd" => "Koopman (EDMD)",
        "narx" => "NARX",
        other => other,
    }
}

fn trajectory_csv(
    data: &TimeSeriesDataset,
    states: &[String],
    edmd: Option<&koopman_turbine::Matrix>,
    narx: &[(String, usize, Vec<f64>)],
) -> Result<String, CliError> {
    let mut out = String::from("time_s");
    for s in states {
        let _ = write!(out, ",{s}_measured");
        if edmd.is_some() {
            let _ = write!(out, ",{s}_edmd");
        }
        if narx.iter().any(|(c, _, _)| c == s) {
            let _ = write!(out, ",{s}_narx");
        }
    }
    out.push('\n');
    let measured: Vec<&[f64]> = states.iter().map(|s| data.values(s)).collect::<Result<_, _>>()?;
    for k in 0..data.len() {
        let _ = write!(out, "{}", data.time(k));
        for (i, s) in states.iter().enumerate() {
            let _ = write!(out, ",{}", measured[i][k]);
            if let Some(m) = edmd {
                let _ = write!(out, ",{}", m[(i, k)]);
            }
            if let Some((_, warmup, pred)) = narx.iter().find(|(c, _, _)| c == s) {
                if k >= *warmup {
                    let _ = write!(out, ",{}", pred[k - warmup]);
                } else {
                    out.push(',');
                }
            }
        }
        out.push('\n');
    }
    Ok(out)
}

fn evaluate_edmd(
    model: &KoopmanModel,
    data: &TimeSeriesDataset,
    warmup: usize,
) -> Result<(koopman_turbine::Matrix, Vec<MetricReport>), CliError> {
    let predicted = model.simulate_dataset(data)?;
    let measured = data.matrix(&model.state_names)?;
    let cols = data.len() - warmup;
    let reports = evaluate_channels(
        &measured.columns(warmup, cols).into_owned(),
        &predicted.columns(warmup, cols).into_owned(),
        &model.state_names,
    )?;
    Ok((predicted, reports))
}

/// Simulates the stored models on the test records and writes metric tables,
/// trajectories and EDMD one-step residuals.
pub fn evaluate(config: &RunConfig) -> Result<Evaluation, CliError> {
    config.validate()?;
    let paths = config.test_paths();
    RunConfig::check_files(&paths)?;
    let use_edmd = config.evaluate.methods.iter().any(|m| m == "edmd");
    let use_narx = config.evaluate.methods.iter().any(|m| m == "narx");
    let mut model_paths = Vec::new();
    if use_edmd {
        model_paths.push(config.edmd_model_path());
    }
    if use_narx {
        model_paths.extend(config.narx.outputs.iter().map(|o| config.narx_model_path(&o.channel)));
    }
    for p in &model_paths {
        if !p.is_file() {
            return Err(CliError::Data(format!("model file {} does not exist", p.display())));
        }
    }
    let tests = load_datasets(config, &paths)?;

    let edmd_model = if use_edmd {
        let m = KoopmanModel::load(&config.edmd_model_path())?;
        if m.state_names != config.data.states || m.input_names != config.data.inputs {
            return Err(CliError::Data("EDMD model channels differ from the configured channels".into()));
        }
        Some(m)
    } else {
        None
    };
    let narx_models = if use_narx {
        config
            .narx
            .outputs
            .iter()
            .map(|o| NarxModel::load(&config.narx_model_path(&o.channel)).map_err(CliError::from))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };
    let warmup = if config.evaluate.warmup_samples >= 0 {
        config.evaluate.warmup_samples as usize
    } else {
        narx_models.iter().map(|m| m.config.warmup()).max().unwrap_or(0)
    };

    let mut rows = Vec::new();
    let mut residuals = Vec::new();
    for data in &tests {
        if warmup + 1 >= data.len() {
            return Err(CliError::Data(format!(
                "`{}` has {} samples, too few after a warm-up of {warmup}",
                data.name,
                data.len()
            )));
        }
        let mut edmd_traj = None;
        if let Some(model) = &edmd_model {
            let (pred, reports) = evaluate_edmd(model, data, warmup)?;
            for report in reports {
                rows.push(EvaluationRow {
                    dataset: data.name.clone(),
                    method: "edmd".into(),
                    report,
                });
            }
            residuals.extend(residual_rows(model, std::slice::from_ref(data))?);
            edmd_traj = Some(pred);
        }
        let mut narx_traj = Vec::new();
        for model in &narx_models {
            let pred = model.simulate_dataset(data, warmup)?;
            let measured = &data.values(&model.output_name)?[warmup..];
            rows.push(EvaluationRow {
                dataset: data.name.clone(),
                method: "narx".into(),
                report: MetricReport::compute(&model.output_name, measured, &pred)?,
            });
            narx_traj.push((model.output_name.clone(), warmup, pred));
        }
        let traj = trajectory_csv(data, &config.data.states, edmd_traj.as_ref(), &narx_traj)?;
        write_file(&config.out_dir.join(format!("trajectory_{}.csv", data.name)), &traj)?;
    }
    write_file(&config.out_dir.join("metrics.csv"), &metrics_csv(&rows))?;
    write_file(&config.out_dir.join("metrics.txt"), &metrics_text(&rows, &config.data.states))?;
    if use_edmd {
        write_file(&config.out_dir.join("evaluate_residuals.csv"), &residual_csv(&residuals))?;
    }
    record_config(config, &config.out_dir, "evaluate")?;
    Ok(Evaluation { rows, residuals, warmup })
}

/// One RBF count of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub n_centers: usize,
    pub training_residual: f64,
    pub rows: Vec<EvaluationRow>,
}

fn sweep_one(config: &RunConfig, train: &[TimeSeriesDataset], tests: &[TimeSeriesDataset], n: usize) -> Result<SweepRun, CliError> {
    let dir = config.out_dir.join("sweep").join(format!("rbf_{n:04}"));
    fs::create_dir_all(&dir)?;
    let outcome = fit_model(config, train, n)?;
    outcome.model.save(&dir.join("edmd.model"))?;
    write_file(&dir.join("fit_report.csv"), &residual_csv(&outcome.residuals))?;
    let mut rows = Vec::new();
    for data in tests {
        let (_, reports) = evaluate_edmd(&outcome.model, data, 0)?;
        rows.extend(reports.into_iter().map(|report| EvaluationRow {
            dataset: data.name.clone(),
            method: "edmd".into(),
            report,
        }));
    }
    write_file(&dir.join("metrics.csv"), &metrics_csv(&rows))?;
    let training_residual = outcome.residuals.last().map(|r| r.2).unwrap_or(f64::NAN);
    log::info!("sweep N = {n}: training residual {training_residual:.6e}");
    Ok(SweepRun {
        n_centers: n,
        training_residual,
        rows,
    })
}

fn sweep_csv(runs: &[SweepRun]) -> String {
    let mut out = String::from("n_rbf,training_residual,dataset,channel,nrmse,nrmse_measured_mean,r_squared,mape\n");
    for run in runs {
        for r in &run.rows {
            let m = &r.report;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                run.n_centers, run.training_residual, r.dataset, m.channel, m.nrmse, m.nrmse_measured_mean, m.r_squared, m.mape
            );
        }
    }
    out
}

/// Accuracy against the number of basis functions, one block per record.
pub fn sweep_text(runs: &[SweepRun], states: &[String]) -> String {
    let mut out = String::new();
    let datasets: Vec<String> = runs
        .first()
        .map(|r| {
            let mut v: Vec<String> = Vec::new();
            for row in &r.rows {
                if !v.contains(&row.dataset) {
                    v.push(row.dataset.clone());
                }
            }
            v
        })
        .unwrap_or_default();
    for d in &datasets {
        let width = 8 + 16 + states.len() * 32;
        let _ = writeln!(out, "Accuracy versus number of basis functions on `{d}`");
        let _ = writeln!(out, "{}", "-".repeat(width));
        let _ = write!(out, "{:<8}{:>16}", "N", "train resid.");
        for s in states {
            let _ = write!(out, "{:>16}{:>16}", format!("{s} NRMSE"), format!("{s} R^2"));
        }
        out.push('\n');
        let _ = writeln!(out, "{}", "-".repeat(width));
        for run in runs {
            let _ = write!(out, "{:<8}{:>16.6e}", run.n_centers, run.training_residual);
            for s in states {
                match run.rows.iter().find(|r| &r.dataset == d && &r.report.channel == s) {
                    Some(r) => {
                        let _ = write!(out, "{:>16.4}{:>16.4}", r.report.nrmse, r.report.r_squared);
                    }
                    None => {
                        let _ = write!(out, "{:>16}{:>16}", "-", "-");
                    }
                }
            }
            out.push('\n');
        }
        let _ = writeln!(out, "{}", "-".repeat(width));
        out.push('\n');
    }
    out
}

/// Repeats fit and evaluation for every configured RBF count.
pub fn sweep(config: &RunConfig) -> Result<Vec<SweepRun>, CliError> {
    config.validate()?;
    if !config.dictionary.family.is_radial() {
        return Err(CliError::Config(format!(
            "sweeping RBF counts needs a radial family, not {}",
            config.dictionary.family.name()
        )));
    }
    let train_paths = config.train_paths();
    let test_paths = config.test_paths();
    RunConfig::check_files(&train_paths)?;
    RunConfig::check_files(&test_paths)?;
    let train = load_datasets(config, &train_paths)?;
    let tests = load_datasets(config, &test_paths)?;
    let counts = &config.sweep.rbf_counts;
    let results: Vec<Result<SweepRun, CliError>> = if config.sweep.parallel {
        counts.par_iter().map(|&n| sweep_one(config, &train, &tests, n)).collect()
    } else {
        counts.iter().map(|&n| sweep_one(config, &train, &tests, n)).collect()
    };
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let dir = config.out_dir.join("sweep");
    write_file(&dir.join("sweep.csv"), &sweep_csv(&runs))?;
    write_file(&dir.join("sweep.txt"), &sweep_text(&runs, &config.data.states))?;
    record_config(config, &dir, "sweep")?;
    Ok(runs)
}
