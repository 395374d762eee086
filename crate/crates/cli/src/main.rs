use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use survbench_core::binary::ModelKind;
use survbench_core::data::{fit_standardizer, split_indices, write_csv, StandardizationParams};
use survbench_core::evaluation::ComparisonReport;
use survbench_core::longitudinal::{extract_features, read_long_csv};
use survbench_core::optim::PenaltyConfig;
use survbench_core::selection::{
    fit_model, kfold_cv, load_dataset, run_benchmark, synth_generate, BenchConfig, CVResult, TrainedModel,
};

/// Benchmark penalized horizon classifiers against censored-survival models.
#[derive(Parser)]
#[command(name = "survbench", version)]
struct Cli {
    /// Repeat for more log output (warnings are always shown).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// JSON run configuration. Relative paths inside it resolve against its
    /// directory. Defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic survival CSV (and optionally its latent truth).
    Synth {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Latent groups and coefficients as JSON.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Long-format measurements to a wide feature matrix.
    Features {
        #[command(flatten)]
        config: ConfigArg,
        /// Long CSV (`subject_id,concept,time_hours,value`); overrides the config.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one model on the whole (standardized) dataset.
    Fit {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        model: ModelKind,
        /// Penalty strength; required unless the model's grid has one value.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate the penalty of one model on the training split.
    Cv {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full comparison run; writes the report into the output directory.
    Bench {
        #[command(flatten)]
        config: ConfigArg,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-emit the tables of a saved run and print its metrics.
    Report {
        /// Directory holding `report.json`.
        #[arg(long)]
        run: PathBuf,
        /// Where to write the tables (defaults to the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Core(survbench_core::Error),
}

impl From<survbench_core::Error> for Failure {
    fn from(e: survbench_core::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(e.into())
    }
}

type CliResult<T> = Result<T, Failure>;

fn load_config(arg: &ConfigArg) -> CliResult<(BenchConfig, PathBuf)> {
    let Some(path) = &arg.config else {
        return Ok((BenchConfig::default(), PathBuf::from(".")));
    };
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let cfg = BenchConfig::from_json(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let base = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    Ok((cfg, base))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(survbench_core::Error::from)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

#[derive(Serialize)]
struct SavedModel<'a> {
    gamma: f64,
    eta: f64,
    covariates: &'a [String],
    standardization: &'a StandardizationParams,
    model: &'a TrainedModel,
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth { config, seed, n, out, truth } => {
            let (cfg, _) = load_config(&config)?;
            let mut synth = cfg.synth;
            synth.seed = seed.unwrap_or(synth.seed);
            synth.n = n.unwrap_or(synth.n);
            let (data, latent) = synth_generate(&synth)?;
            write_csv(&data, fs::File::create(&out)?)?;
            if let Some(path) = truth {
                write_json(&path, &latent)?;
            }
            eprintln!("wrote {} subjects to {}", data.len(), out.display());
        }
        Command::Features { config, input, out } => {
            let (cfg, base) = load_config(&config)?;
            let input = match (input, &cfg.data.longitudinal) {
                (Some(p), _) => p,
                (None, Some(p)) => base.join(p),
                (None, None) => return Err(Failure::Usage("no longitudinal input given".into())),
            };
            let series = read_long_csv(fs::File::open(&input)?)?;
            let opts = survbench_core::longitudinal::FeatureOptions { seed: cfg.seed, ..cfg.features };
            let fm = extract_features(&series, &opts)?;
            fm.write_csv(fs::File::create(&out)?)?;
            eprintln!("wrote {} subjects x {} features to {}", fm.subjects.len(), fm.columns.len(), out.display());
        }
        Command::Fit { config, model, gamma, out } => {
            let (cfg, base) = load_config(&config)?;
            let gamma = match (gamma, cfg.penalty.grid_for(model)) {
                (Some(g), _) => g,
                (None, [g]) => *g,
                (None, _) => return Err(Failure::Usage("pass --gamma or a single-value penalty grid".into())),
            };
            let penalty = PenaltyConfig::new(gamma, cfg.penalty.eta).map_err(|e| Failure::Usage(e.to_string()))?;
            let data = load_dataset(&cfg, &base)?;
            let scaler = fit_standardizer(&data)?;
            let scaled = scaler.transform(&data)?;
            let fitted = fit_model(model, &scaled.records, cfg.epsilon, penalty, &cfg.mixture_options())?;
            write_json(
                &out,
                &SavedModel {
                    gamma,
                    eta: cfg.penalty.eta,
                    covariates: &data.names,
                    standardization: &scaler,
                    model: &fitted,
                },
            )?;
        }
        Command::Cv { config, model, out } => {
            let (cfg, base) = load_config(&config)?;
            let data = load_dataset(&cfg, &base)?;
            let (train_idx, _) = split_indices(data.len(), cfg.test_fraction, cfg.seed)?;
            let train_raw = data.subset(&train_idx);
            let train = fit_standardizer(&train_raw)?.transform(&train_raw)?;
            let cv: CVResult = kfold_cv(&train.records, model, &cfg.cv_settings(model))?;
            println!("gamma,mean_score");
            for (g, m) in cv.gamma_grid.iter().zip(cv.mean_scores()) {
                println!("{g},{}", m.map_or_else(String::new, |v| v.to_string()));
            }
            println!("chosen gamma: {}", cv.chosen_gamma);
            if let Some(path) = out {
                write_json(&path, &cv)?;
            }
        }
        Command::Bench { config, out } => {
            let (cfg, base) = load_config(&config)?;
            let dir = out.unwrap_or_else(|| base.join(&cfg.output_dir));
            let data = load_dataset(&cfg, &base)?;
            let outcome = run_benchmark(&cfg, &data)?;
            outcome.report.write_dir(&dir)?;
            print!("{}", outcome.report.metrics_csv()?);
            eprintln!("report written to {}", dir.display());
        }
        Command::Report { run, out } => {
            let text = fs::read_to_string(run.join("report.json"))?;
            let report = ComparisonReport::from_json(&text)?;
            report.write_tables(&out.unwrap_or(run))?;
            print!("{}", report.metrics_csv()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
