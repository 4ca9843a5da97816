//! `hpcheck`: parse, simulate, check and run the bundled suite.

mod commands;
mod options;
mod random;
mod report;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use options::{CheckArgs, ParseArgs, SearchArgs, SimulateArgs};

#[derive(Parser)]
#[command(name = "hpcheck", version, about = "Hybrid-program modeling-error checker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a model and print it back with its detected shape.
    Parse(ParseArgs),
    /// Replay a choice script or run random executions.
    Simulate(SimulateArgs),
    /// Generate obligations for an invariant and search them.
    Check(CheckArgs),
    /// Run the bundled eight-row suite and compare with the expected verdicts.
    Table2(SearchArgs),
}

/// Exit status contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    Finding = 1,
    Usage = 2,
    Certification = 3,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { Status::Usage } else { Status::Ok };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let result = match cli.command {
        Command::Parse(a) => commands::parse(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Check(a) => commands::check(&a),
        Command::Table2(a) => commands::table2(&a),
    };
    let status = match result {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.status
        }
    };
    ExitCode::from(status as u8)
}
