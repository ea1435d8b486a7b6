//! Command-line front end for the tree-library toolkit.
//!
//! Exit codes: 0 success, 1 error, 2 usage, 3 run finished without
//! reaching its stopping criterion.

mod config;
mod output;
mod runner;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "treelib", version, about = "Tree-based libraries of local reduced models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured algorithm and write all artifacts.
    Run {
        /// TOML configuration file.
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a stored library at one parameter.
    Eval {
        /// TOML configuration file the artifacts were produced with.
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated parameter components.
        #[arg(long, value_name = "Y0,Y1,...")]
        param: String,
        /// Also report the truth best-fit error (Hilbert problems only).
        #[arg(long)]
        diagnostic: bool,
    },
    /// Merge summary.json files into one CSV table.
    Compare {
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// summary.json files to merge.
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
    },
    /// Print the default configuration as TOML.
    ShowDefaults,
}

fn load_config(path: &PathBuf) -> Result<config::RunConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn dispatch(cli: Cli) -> Result<i32, String> {
    match cli.command {
        Command::Run { config } => runner::run(&load_config(&config)?),
        Command::Eval {
            config,
            param,
            diagnostic,
        } => {
            let y: Vec<f64> = param
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| format!("bad --param value: {e}"))?;
            runner::eval(&load_config(&config)?, &y, diagnostic)
        }
        Command::Compare { out, summaries } => runner::compare(&summaries, &out),
        Command::ShowDefaults => {
            print!(
                "{}",
                toml::to_string_pretty(&config::default_config()).expect("defaults serialize")
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
