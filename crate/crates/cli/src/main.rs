use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use koopman_turbine::DictionaryFamily;
use koopman_turbine_cli::{commands, config, CliError, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "kturb", version, about = "Koopman and NARX identification of turbocharger turbine dynamics")]
struct Cli {
    /// Print the annotated configuration schema and exit.
    #[arg(long)]
    print_schema: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Training CSV files (comma separated).
    #[arg(long, value_delimiter = ',')]
    train: Option<Vec<PathBuf>>,
    /// Test CSV files (comma separated).
    #[arg(long, value_delimiter = ',')]
    test: Option<Vec<PathBuf>>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the surrogate turbine and write training and test CSVs.
    GenData(Common),
    /// Fit the lifted linear model.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Number of RBF centers.
        #[arg(long)]
        n_centers: Option<usize>,
        /// Dictionary family.
        #[arg(long)]
        family: Option<String>,
    },
    /// Train one NARX network per configured output.
    FitNarx(Common),
    /// Simulate stored models on the test records and write metrics.
    Evaluate(Common),
    /// Fit and evaluate for each RBF count.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// RBF counts (comma separated).
        #[arg(long, value_delimiter = ',')]
        rbf_counts: Option<Vec<usize>>,
    },
}

fn overrides(c: &Common) -> Overrides {
    Overrides {
        seed: c.seed,
        out_dir: c.out_dir.clone(),
        train: c.train.clone(),
        test: c.test.clone(),
        ..Default::default()
    }
}

fn run(command: Command) -> Result<(), CliError> {
    let load = |c: &Common, o: Overrides| RunConfig::load(c.config.as_deref(), &o);
    match command {
        Command::GenData(c) => {
            let cfg = load(&c, overrides(&c))?;
            commands::gen_data(&cfg)?;
        }
        Command::Fit {
            common,
            n_centers,
            family,
        } => {
            let family = family
                .map(|f| f.parse::<DictionaryFamily>().map_err(|e| CliError::Config(e.to_string())))
                .transpose()?;
            let o = Overrides {
                n_centers,
                family,
                ..overrides(&common)
            };
            commands::fit(&load(&common, o)?)?;
        }
        Command::FitNarx(c) => {
            commands::fit_narx(&load(&c, overrides(&c))?)?;
        }
        Command::Evaluate(c) => {
            let cfg = load(&c, overrides(&c))?;
            let eval = commands::evaluate(&cfg)?;
            print!("{}", commands::metrics_text(&eval.rows, &cfg.data.states));
        }
        Command::Sweep { common, rbf_counts } => {
            let o = Overrides {
                rbf_counts,
                ..overrides(&common)
            };
            let cfg = load(&common, o)?;
            let runs = commands::sweep(&cfg)?;
            print!("{}", commands::sweep_text(&runs, &cfg.data.states));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if cli.print_schema {
        print!("{}", config::SCHEMA);
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("no command given; see `kturb --help`");
        return ExitCode::from(2);
    };
    match run(command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
