//! Command-line front end: analytic curves, allocation decisions, simulations
//! and the load and forecast-error sweeps.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "serverfarm", version, about = "Revenue-driven server allocation: analysis and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct CommonArgs {
    /// Experiment file (.json or .toml).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the simulation seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: current directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the number of independent replications.
    #[arg(long)]
    pub replications: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate throughput, abandonment, power and revenue for each allocation.
    Analyze(CommonArgs),
    /// Choose the allocation from the current one by binary search.
    Optimize(CommonArgs),
    /// Run the simulation and write its report and per-window log.
    Simulate(CommonArgs),
    /// Simulate every policy over a list of arrival rates.
    Sweep(CommonArgs),
    /// Simulate the adaptive policy under growing forecast errors.
    Sensitivity(CommonArgs),
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<serverfarm::Error> for CliError {
    fn from(e: serverfarm::Error) -> Self {
        use serverfarm::Error as E;
        match e {
            E::Numerical { .. } => CliError::Numerical(e.to_string()),
            // The library only reads files when loading traces named in the
            // configuration.
            E::Domain(_) | E::Config(_) | E::TraceParse { .. } | E::Io(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(a) => commands::analyze(a),
        Command::Optimize(a) => commands::optimize(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Sensitivity(a) => commands::sensitivity(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("serverfarm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_to_exit_codes() {
        let numerical = serverfarm::Error::Numerical { message: "no convergence".into(), partial: 0.5 };
        assert_eq!(CliError::from(numerical).exit_code(), 3);
        let trace = serverfarm::Error::TraceParse { line: 3, message: "bad".into() };
        assert_eq!(CliError::from(trace).exit_code(), 2);
        assert_eq!(CliError::from(serverfarm::Error::Domain("x".into())).exit_code(), 2);
    }

    #[test]
    fn cli_parses_common_flags() {
        let cli = Cli::try_parse_from(["serverfarm", "simulate", "--config", "a.toml", "--seed", "9", "--replications", "4"]).unwrap();
        match cli.command {
            Command::Simulate(a) => {
                assert_eq!(a.seed, Some(9));
                assert_eq!(a.replications, Some(4));
                assert_eq!(a.out, None);
            }
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["serverfarm", "simulate"]).is_err());
    }
}
