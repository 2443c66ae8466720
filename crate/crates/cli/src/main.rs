use std::path::PathBuf;
use std::process;

use clap::{Args, Parser, Subcommand};

use adloc_cli::commands::{self, SimulateOpts, SweepOpts};

/// Localizability analysis and distributed localization for sensor
/// networks measured up to similarity.
#[derive(Parser)]
#[command(name = "adloc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML)
    #[arg(long)]
    scenario: PathBuf,
    /// Write the artifact here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override for the subcommand's randomness
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Report constraint counts, nullspace structure, and localizability
    /// (exit 0 when localizable, 2 when not)
    Analyze {
        #[command(flatten)]
        common: Common,
    },
    /// Recover free-node positions from the anchors in one linear solve
    Localize {
        #[command(flatten)]
        common: Common,
    },
    /// Run the distributed update and record the trajectory
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Step size (default: half the inverse of the top eigenvalue)
        #[arg(long)]
        step: Option<f64>,
        /// Round limit
        #[arg(long)]
        max_iters: Option<usize>,
        /// Stopping threshold on node error or movement
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Tabulate perturbed solves against the error bound over noise scales
    NoiseSweep {
        #[command(flatten)]
        common: Common,
        /// Noise scale; repeat for a grid (default: the scenario's sigma)
        #[arg(long)]
        sigma: Vec<f64>,
        /// Trials per scale
        #[arg(long)]
        trials: Option<u32>,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Analyze { common } => {
            commands::analyze(&common.scenario, common.out.as_deref(), common.seed)
        }
        Command::Localize { common } => {
            commands::localize(&common.scenario, common.out.as_deref(), common.seed)
        }
        Command::Simulate {
            common,
            step,
            max_iters,
            tol,
        } => commands::simulate(
            &common.scenario,
            common.out.as_deref(),
            &SimulateOpts {
                seed: common.seed,
                step,
                max_iters,
                tol,
            },
        ),
        Command::NoiseSweep {
            common,
            sigma,
            trials,
        } => commands::noise_sweep(
            &common.scenario,
            common.out.as_deref(),
            &SweepOpts {
                seed: common.seed,
                sigmas: sigma,
                trials,
            },
        ),
    };
    match result {
        Ok(code) => process::exit(code),
        Err(f) => {
            eprintln!("error: {f}");
            process::exit(f.exit_code());
        }
    }
}
