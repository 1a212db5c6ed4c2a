//! `cipd`: noise budgets, trace simulation, readout analysis and parameter sweeps.

mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cipd", version, about = "Charge-integration photon detector: noise model, simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the CDS noise integral and the resolution in carriers.
    NoiseBudget {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        quad: Quadrature,
    },
    /// Synthesize one output-voltage trace and its manifest.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Read out traces, histogram the counts and fit a Poisson law.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Trace files (.csv or .json).
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Also fit the staircase and flag windows holding steps of at
        /// least this many electrons away from any pulse.
        #[arg(long)]
        min_step: Option<f64>,
    },
    /// Tabulate the noise budget over a Cartesian grid of parameters.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `name=v1,v2,...`; repeat for more axes.
        #[arg(long = "param", required = true)]
        params: Vec<String>,
        #[command(flatten)]
        quad: Quadrature,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply to anything it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct Quadrature {
    /// Relative tolerance of the adaptive quadrature.
    #[arg(long, default_value_t = 1e-6)]
    rel_tol: f64,
    /// Subinterval budget; exhausting it is a convergence failure.
    #[arg(long, default_value_t = 1_000_000)]
    max_intervals: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::NoiseBudget { common, quad } => commands::noise_budget(&common, &quad),
        Command::Simulate { common } => commands::simulate(&common),
        Command::Analyze {
            common,
            traces,
            min_step,
        } => commands::analyze(&common, &traces, min_step),
        Command::Sweep {
            common,
            params,
            quad,
        } => commands::sweep(&common, &params, &quad),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
