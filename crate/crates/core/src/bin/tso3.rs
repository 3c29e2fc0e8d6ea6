use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tso3::harness::checks::check_suite;
use tso3::harness::monte_carlo::monte_carlo;
use tso3::harness::output::{read_run, write_run};
use tso3::harness::spectral::spectral_analysis;
use tso3::harness::tuning::tune_pf;
use tso3::harness::{run_case, ExperimentConfig, Platform, Variant};
use tso3::Error;

#[derive(Parser)]
#[command(
    name = "tso3",
    version,
    about = "Attitude and rate estimation experiments on SO(3)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    Uav,
    Satellite,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    ProcessNoise,
    Deterministic,
}

#[derive(Subcommand)]
enum Command {
    /// Run every selected filter on one simulated trajectory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat a run with shifted seeds and aggregate the summaries.
    MonteCarlo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Adjust the PF model-error penalty against the residual-variance target.
    TunePf {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the property checks and print measured margins.
    Check,
    /// Rate-error spectra of a stored run.
    Spectrum {
        #[arg(long)]
        result: PathBuf,
        /// Analysis window as `t0:t1` in seconds.
        #[arg(long)]
        window: String,
    },
    /// Print a built-in case configuration.
    Preset {
        #[arg(long, value_enum)]
        case: CaseArg,
        #[arg(long, value_enum)]
        variant: VariantArg,
    },
}

enum Failure {
    Divergence(String),
    Config(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_divergence() {
            Failure::Divergence(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

fn parse_window(s: &str) -> Result<[f64; 2], Failure> {
    let bad = || Failure::Config(format!("window must look like t0:t1, got {s:?}"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    Ok([
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ])
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    ExperimentConfig::load(path).map_err(|e| Failure::Config(e.to_string()))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Config(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn execute(command: Command) -> Result<bool, Failure> {
    match command {
        Command::Run { config, out } => {
            let cfg = load(&config)?;
            let result = run_case(&cfg)?;
            write_run(&result, &out)?;
            for s in &result.summaries {
                match &s.divergence {
                    Some(d) => println!("{}: diverged at {:.3} s: {}", s.kind, d.time_s, d.message),
                    None => println!(
                        "{}: steady-state e_R {:.4} deg, e_W {:.3e} rad/s, converged at {}",
                        s.kind,
                        s.steady_state_mean_e_r_rad.to_degrees(),
                        s.steady_state_mean_e_omega_rad_s,
                        s.convergence_time_s
                            .map_or("never".to_string(), |t| format!("{t:.3} s"))
                    ),
                }
            }
            if let Some(pf) = &result.pf {
                println!(
                    "pf: trace(M) {:.4}, sigma* {:.4}",
                    pf.trace_m, pf.sigma_star
                );
            }
            Ok(!result.any_divergence())
        }
        Command::MonteCarlo {
            config,
            trials,
            out,
        } => {
            let cfg = load(&config)?;
            let report = monte_carlo(&cfg, trials)?;
            std::fs::create_dir_all(&out).map_err(Error::from)?;
            let text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
            std::fs::write(out.join("monte_carlo.json"), text + "\n").map_err(Error::from)?;
            for f in &report.filters {
                println!(
                    "{}: steady-state e_R {:.4} ± {:.4} deg over {} trials, {} divergences",
                    f.kind,
                    f.steady_state_mean_e_r_rad.mean.to_degrees(),
                    f.steady_state_mean_e_r_rad.std.to_degrees(),
                    f.steady_state_mean_e_r_rad.count,
                    f.divergences
                );
            }
            Ok(!report.any_divergence())
        }
        Command::TunePf { config } => {
            let cfg = load(&config)?;
            print_json(&tune_pf(&cfg)?)?;
            Ok(true)
        }
        Command::Check => {
            let report = check_suite();
            for e in &report.entries {
                println!("{}", e.line());
            }
            Ok(report.all_passed())
        }
        Command::Spectrum { result, window } => {
            let window = parse_window(&window)?;
            let run = read_run(&result)?;
            print_json(&spectral_analysis(&run, window)?)?;
            Ok(true)
        }
        Command::Preset { case, variant } => {
            let platform = match case {
                CaseArg::Uav => Platform::Uav,
                CaseArg::Satellite => Platform::Satellite,
            };
            let variant = match variant {
                VariantArg::ProcessNoise => Variant::ProcessNoise,
                VariantArg::Deterministic => Variant::Deterministic,
            };
            print_json(&ExperimentConfig::preset(platform, variant))?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Divergence(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
