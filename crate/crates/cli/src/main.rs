use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use decouple_cli::commands::EXIT_ERROR;
use decouple_cli::{cmd_analyze, cmd_decouple, cmd_poles, cmd_verify, DecoupleOptions, Report};
use decouple_core::synthesis::Limits;

/// Row-by-row decoupling of linear systems by static state feedback.
#[derive(Parser)]
#[command(name = "decouple", version)]
struct Cli {
    /// Print the JSON report instead of text.
    #[arg(long, global = true)]
    json: bool,

    /// Also write the JSON report to this file.
    #[arg(long, global = true, value_name = "FILE")]
    report: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Relative orders, decoupling matrix and frameworks.
    Analyze {
        system: PathBuf,
        #[arg(long)]
        max_frameworks: Option<usize>,
    },
    /// Search for a decoupling law.
    Decouple {
        system: PathBuf,
        #[arg(long)]
        max_frameworks: Option<usize>,
        #[arg(long)]
        max_strings: Option<usize>,
        #[arg(long)]
        max_masters: Option<usize>,
        /// Poles for modes moved by spare inputs.
        #[arg(long, value_name = "FILE")]
        poles: Option<PathBuf>,
        /// Include the iteration trace of every branch.
        #[arg(long)]
        trace: bool,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check that a law decouples the system.
    Verify {
        system: PathBuf,
        law: PathBuf,
        /// Accept any diagonal, not only pure integrators.
        #[arg(long)]
        relaxed_diagonal: bool,
    },
    /// Assign poles while keeping the system decoupled.
    Poles {
        system: PathBuf,
        law: PathBuf,
        #[arg(long, value_name = "FILE")]
        poles: Option<PathBuf>,
    },
}

fn run(cli: &Cli) -> Result<Report, decouple_cli::CliError> {
    match &cli.command {
        Command::Analyze { system, max_frameworks } => cmd_analyze(system, *max_frameworks),
        Command::Decouple { system, max_frameworks, max_strings, max_masters, poles, trace, jobs } => {
            let opts = DecoupleOptions {
                limits: Limits {
                    max_frameworks: *max_frameworks,
                    max_strings: *max_strings,
                    max_masters: *max_masters,
                    jobs: *jobs,
                },
                poles: poles.clone(),
                trace: *trace,
            };
            cmd_decouple(system, &opts)
        }
        Command::Verify { system, law, relaxed_diagonal } => cmd_verify(system, law, *relaxed_diagonal),
        Command::Poles { system, law, poles } => cmd_poles(system, law, poles.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            let machine = serde_json::to_string_pretty(&report.machine()).expect("report serializes");
            if let Some(path) = &cli.report {
                if let Err(err) = fs::write(path, format!("{machine}\n")) {
                    eprintln!("error: {}: {err}", path.display());
                    return ExitCode::from(EXIT_ERROR as u8);
                }
            }
            if cli.json {
                println!("{machine}");
            } else {
                print!("{}", report.text);
            }
            ExitCode::from(report.exit_code as u8)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
