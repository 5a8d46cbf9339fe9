//! Batch experiment CLI.
//!
//! Exit codes: 0 all checks passed, 1 a criterion failed or the run was
//! refused, 2 configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use diraclab_cli::config::ExperimentConfig;
use diraclab_cli::drivers::{self, DriverError};

#[derive(Parser)]
#[command(name = "diraclab", version, about = "Lattice Dirac dynamics laboratory")]
struct Cli {
    /// TOML configuration file (defaults are used when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the ensemble seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for report.json and tables.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override grid points per axis.
    #[arg(long, global = true)]
    grid: Option<usize>,

    /// Override the ensemble size.
    #[arg(long, global = true)]
    samples: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact-algebra invariant suite.
    CheckAlgebra,
    /// Covariance dynamics: fixed point, closed forms, time-average law.
    Covariance,
    /// Generate an ensemble; write metadata, estimates, and a field dump.
    Sample,
    /// Monte Carlo covariance of an evolved Gaussian ensemble.
    CovarianceMc {
        /// Grid points per axis for the comparison.
        #[arg(long, default_value_t = 16)]
        mc_grid: usize,
        /// Ensemble size.
        #[arg(long, default_value_t = 2000)]
        mc_samples: usize,
        /// Evolution time.
        #[arg(long, default_value_t = 4.0)]
        t: f64,
    },
    /// Free-flow convergence of characteristic functionals.
    FreeEquilibrium,
    /// Projected perturbed-flow convergence with the wave operator.
    PerturbedEquilibrium,
    /// Dispersive-decay slope of a localized packet.
    Decay,
    /// Wave-operator assembly, remainder decay, and pairing bound.
    Waveop,
    /// Gap eigenpairs of the attractive well with diagnostics.
    Spectrum,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.sampler.seed = seed;
    }
    if let Some(n) = cli.grid {
        cfg.grid.n = n;
        cfg.grid.extent = n as f64;
    }
    if let Some(samples) = cli.samples {
        cfg.sampler.samples = samples;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("config error: {msg}");
            return ExitCode::from(2);
        }
    };
    let out_dir = PathBuf::from(&cfg.output.dir);
    let out = Some(out_dir.as_path());

    let result = match &cli.command {
        Command::CheckAlgebra => drivers::cmd_check_algebra(&cfg, out),
        Command::Covariance => drivers::cmd_covariance(&cfg, out),
        Command::Sample => drivers::cmd_sample(&cfg, out),
        Command::CovarianceMc {
            mc_grid,
            mc_samples,
            t,
        } => drivers::cmd_mc_covariance(&cfg, *mc_grid, *mc_samples, *t, out),
        Command::FreeEquilibrium => drivers::cmd_free_equilibrium(&cfg, out),
        Command::PerturbedEquilibrium => drivers::cmd_perturbed_equilibrium(&cfg, out),
        Command::Decay => drivers::cmd_decay(&cfg, out),
        Command::Waveop => drivers::cmd_waveop(&cfg, out),
        Command::Spectrum => drivers::cmd_spectrum(&cfg, out),
    };

    match result {
        Ok(report) => {
            for check in report.results["checks"].as_array().into_iter().flatten() {
                let name = check["name"].as_str().unwrap_or("?");
                let passed = check["passed"].as_bool().unwrap_or(false);
                println!("{}: {}", if passed { "PASS" } else { "FAIL" }, name);
            }
            if report.passed {
                println!("{}: all checks passed", report.command);
                ExitCode::SUCCESS
            } else {
                println!("{}: FAILED", report.command);
                ExitCode::from(1)
            }
        }
        Err(DriverError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(DriverError::Run(err)) => {
            eprintln!("run error: {err}");
            ExitCode::from(1)
        }
    }
}
