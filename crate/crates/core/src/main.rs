use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use sieve_index::estimator::fit;
use sieve_index::harness::{read_data, run_experiment, write_data, ExperimentConfig};
use sieve_index::inference::{profile_blocks, sigma2_hat};
use sieve_index::likelihood::hessian_blocks;
use sieve_index::model::{simulate, stream_seed, truncate};
use sieve_index::pursuit::fit_pursuit;
use sieve_index::Result;

#[derive(Parser)]
#[command(name = "sieve-index", version, about = "Wavelet sieve single-index estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one sample of size n_grid[0] from the configured model.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the single-index estimator to a data CSV.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a projection pursuit model to a data CSV.
    Pursuit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a Monte Carlo experiment and write its report directory.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct FitReport {
    theta: Vec<f64>,
    angles: Vec<f64>,
    eta: Vec<f64>,
    loglik: f64,
    objective: f64,
    converged: bool,
    iterations: usize,
    jitter: f64,
    gram_condition: f64,
    eta_on_boundary: bool,
    sigma2: f64,
    rho: Option<f64>,
    n_kept: usize,
}

fn write_json<T: Serialize>(value: &T, path: &PathBuf) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text)?;
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out } => {
            let config = ExperimentConfig::load(&config)?;
            let basis = config.basis()?;
            let n = config.n_grid[0];
            let data = simulate(&config.model, Some(&basis), n, stream_seed(config.seed, n as u64, 0))?;
            write_data(&data, &out)
        }
        Command::Fit { config, data, out } => {
            let config = ExperimentConfig::load(&config)?;
            let basis = config.basis()?;
            let data = truncate(&read_data(&data)?, config.s_x)?;
            let est = fit(&data, &basis, &config.estimator)?;
            let gn = hessian_blocks(&data, &basis, &est.param, true);
            let report = FitReport {
                theta: est.theta.iter().copied().collect(),
                angles: est.param.angles.0.clone(),
                eta: est.param.eta.iter().copied().collect(),
                loglik: est.loglik,
                objective: est.objective,
                converged: est.trace.converged,
                iterations: est.trace.iterations_used,
                jitter: est.jitter,
                gram_condition: est.condition,
                eta_on_boundary: est.eta_on_boundary,
                sigma2: sigma2_hat(&data, &basis, &est.param)?,
                rho: profile_blocks(&gn, est.jitter).ok().map(|b| b.rho),
                n_kept: data.n_kept(),
            };
            write_json(&report, &out)
        }
        Command::Pursuit { config, data, out } => {
            let config = ExperimentConfig::load(&config)?;
            let basis = config.basis()?;
            let data = truncate(&read_data(&data)?, config.s_x)?;
            let model = fit_pursuit(&data, &basis, &config.estimator, config.pursuit_components, config.var_threshold)?;
            write_json(&model, &out)
        }
        Command::Experiment { config, out } => {
            let config = ExperimentConfig::load(&config)?;
            let report = run_experiment(&config, out.as_deref())?;
            let failed: usize = report.summary.sizes.iter().map(|s| s.failed).sum();
            eprintln!(
                "{} rows ({failed} failed) in {:.1}s",
                report.rows.len(),
                report.summary.runtime_seconds
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code: i32 = e.exit_code();
            ExitCode::from(u8::try_from(code).unwrap_or(1))
        }
    }
}
