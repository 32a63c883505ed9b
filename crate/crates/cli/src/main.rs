//! `televar`: probability and fidelity surfaces, averaged fidelities and
//! oracle checks for continuous-variable teleportation protocols.
//!
//! Exit codes: 0 success, 1 failing oracle, 2 configuration error,
//! 3 convergence failure, 4 any other error.

mod commands;
mod config;
mod emit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Failure, Status};
use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "televar", version, about = "Continuous-variable teleportation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Probability and fidelity over the measurement-outcome plane.
    Surface(RunArgs),
    /// Averaged fidelity per protocol and input.
    Average {
        #[command(flatten)]
        run: RunArgs,
        /// Both reference inputs through all three protocols.
        #[arg(long)]
        all: bool,
    },
    /// Run the numerical oracles and report pass/fail.
    Check {
        #[command(flatten)]
        run: RunArgs,
        /// List the oracle names without running them.
        #[arg(long)]
        list: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// original | ps | cpg
    #[arg(long)]
    protocol: Option<String>,
    /// squeezed:<dB> | cat:<b> | fock:<c0>,<c1>,... | file:<csv>
    #[arg(long, allow_hyphen_values = true)]
    input: Option<String>,
    /// Averaging convention: weighted | literal
    #[arg(long)]
    mode: Option<String>,
    /// Axis normalization: std | variance
    #[arg(long)]
    axes: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Resource squeezing in dB.
    #[arg(long, allow_negative_numbers = true)]
    resource_db: Option<f64>,
    /// Beam-splitter reflectance for photon subtraction.
    #[arg(long)]
    r_bs: Option<f64>,
    /// Cubic nonlinearity.
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    /// Ancilla displacement.
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// CZ gate weight.
    #[arg(long, allow_negative_numbers = true)]
    g: Option<f64>,
    /// Points of the position grid (odd).
    #[arg(long)]
    grid_points: Option<usize>,
    /// Fock truncation.
    #[arg(long)]
    k: Option<usize>,
    /// Outcome lattice points per axis (odd, >= 9).
    #[arg(long)]
    resolution: Option<usize>,
    /// Convergence tolerance on the averaged fidelity.
    #[arg(long)]
    tolerance: Option<f64>,
    /// double_grid | double_k | double_outcome_res | none
    #[arg(long)]
    refine: Option<String>,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig, Failure> {
        let file = match &self.config {
            Some(path) => Some(config::read_file(path)?),
            None => None,
        };
        let o = Overrides {
            protocol: self.protocol,
            input: self.input,
            mode: self.mode,
            axes: self.axes,
            out: self.out,
            resource_db: self.resource_db,
            r_bs: self.r_bs,
            gamma: self.gamma,
            alpha: self.alpha,
            g: self.g,
            grid_points: self.grid_points,
            k: self.k,
            resolution: self.resolution,
            tolerance: self.tolerance,
            refine: self.refine,
        };
        Ok(RunConfig::resolve(file, &o)?)
    }
}

fn run(cli: Cli) -> Result<Status, Failure> {
    match cli.command {
        Command::Surface(args) => commands::surface(&args.resolve()?),
        Command::Average { run, all } => commands::average(&run.resolve()?, all),
        Command::Check { run, list } => {
            if list {
                return commands::check_list();
            }
            commands::check(&run.resolve()?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::OracleFailed) => ExitCode::from(1),
        Ok(Status::NotConverged) => ExitCode::from(3),
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(4)
        }
    }
}
