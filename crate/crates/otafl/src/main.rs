use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use otafl::analysis::fit_convergence_order;
use otafl::data::config::ExperimentConfig;
use otafl::data::mnist::DataEnv;
use otafl::data::read_trajectory;
use otafl::error::Error;
use otafl::seed::derive_rng;
use otafl::stable::{sample_sas, StableParams};
use otafl::suites::{run_suite, suite_names, SuiteOptions, SuiteOverrides};

/// Simulator of federated edge learning over an analog multiple-access
/// channel with heavy-tailed interference.
#[derive(Parser)]
#[command(name = "otafl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named experiment suite.
    Run {
        /// One of the registered suites.
        #[arg(value_parser = suite_names())]
        suite: String,
        /// TOML file of suite overrides (seeds, alphas, rounds, ...).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (default: ./out/<suite>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Only run cells whose id contains this substring.
        #[arg(long)]
        cells: Option<String>,
    },
    /// Fit the decay exponent of a recorded trajectory.
    FitRate {
        trajectory: PathBuf,
        /// Optimal objective value the gap is measured against.
        #[arg(long)]
        fstar: f64,
        /// Rounds to drop before fitting.
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
    },
    /// Print draws from the interference law, one per line.
    SampleNoise {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parse and validate an experiment config; print its digest.
    ValidateConfig { path: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run {
            suite,
            config,
            out,
            cells,
        } => {
            let overrides = match config {
                Some(path) => SuiteOverrides::from_path(&path)?,
                None => SuiteOverrides::default(),
            };
            let opts = SuiteOptions {
                out_dir: out.unwrap_or_else(|| PathBuf::from("out").join(&suite)),
                cells,
                overrides,
                env: DataEnv::from_env(),
            };
            let report = run_suite(&suite, &opts)?;
            println!(
                "suite {}: {} cells, {} failed, {} diverged -> {}",
                report.suite,
                report.cells_run,
                report.cells_failed,
                report.cells_diverged,
                report.summary_path.display()
            );
            if report.cells_failed > 0 {
                Ok(ExitCode::from(1))
            } else if report.cells_diverged > 0 {
                // Divergence events surface in the exit status.
                Ok(ExitCode::from(3))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
        Command::FitRate {
            trajectory,
            fstar,
            burn_in,
        } => {
            let (records, _) = read_trajectory(&trajectory)?;
            let losses: Vec<f64> = records.iter().map(|r| r.train_loss).collect();
            let fit = fit_convergence_order(&losses, fstar, burn_in)?;
            println!("exponent,std_error,points");
            println!("{:.6},{:.6},{}", fit.exponent, fit.std_error, fit.points);
            Ok(ExitCode::SUCCESS)
        }
        Command::SampleNoise {
            alpha,
            sigma,
            n,
            seed,
        } => {
            let params = StableParams::new(alpha, sigma)?;
            let mut rng = derive_rng(seed, &["sample-noise"]);
            let samples = sample_sas(&params, n, &mut rng)?;
            let mut out = String::with_capacity(n * 24);
            for s in samples {
                out.push_str(&format!("{s:.16e}\n"));
            }
            print!("{out}");
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateConfig { path } => {
            let config = ExperimentConfig::from_path(&path)?;
            let known = otafl::workloads::workload_ids();
            if !known.contains(&config.workload.id.as_str()) {
                return Err(Error::Config(format!(
                    "unknown workload `{}` (known: {})",
                    config.workload.id,
                    known.join(", ")
                )));
            }
            let digest = config.digest()?;
            println!("ok {digest}");
            Ok(ExitCode::SUCCESS)
        }
    }
}
