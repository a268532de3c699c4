//! `liftmac` — reproducible experiments on the lifted-graph cancellation
//! demodulator: density-evolution curves, coupling thresholds, Monte Carlo
//! link simulation, and the verification suites.
//!
//! Every run writes a `manifest.json` (full parameter echo, seed, version,
//! wall time) next to its results; results files carry no timestamps, so a
//! rerun with the same manifest reproduces them byte for byte.
//!
//! Exit codes: 0 success, 2 usage, 3 check failure, 4 censored/unconverged.

mod cmds;
mod config;
mod output;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "liftmac", version, about = "lifted-graph iterative cancellation demodulator toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Output directory for manifest and results (default:
    /// $LIFTMAC_OUT/<command> or ./runs/<command>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// TOML file supplying per-command defaults; explicit flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for trial/grid fan-out (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Density-evolution BER curves and fixed-point structure over an SNR grid.
    De(cmds::DeArgs),
    /// Coupling-threshold search for windowed and simple schemes.
    Threshold(cmds::ThresholdArgs),
    /// Monte Carlo demodulation of lifted frames against the DE prediction.
    Simulate(cmds::SimulateArgs),
    /// Verification suites: projection geometry, kernel integrity, bound chain.
    Verify(cmds::VerifyArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.common.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("warning: could not size worker pool: {e}");
        }
    }
    let result = match cli.command {
        Command::De(args) => cmds::run_de(&cli.common, args),
        Command::Threshold(args) => cmds::run_threshold(&cli.common, args),
        Command::Simulate(args) => cmds::run_simulate(&cli.common, args),
        Command::Verify(args) => cmds::run_verify(&cli.common, args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
