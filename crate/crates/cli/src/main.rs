//! Admin command line for the cover-story datastore.
//!
//! Exit codes are a stable contract: 0 for success (including a secure
//! check), 1 for usage, I/O, or parse errors, 2 when a checked database
//! is insecure.

mod shell;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use coverstore::{is_secure, parse_database, serialize};

#[derive(Parser)]
#[command(
    name = "coverstore",
    version,
    about = "Multilevel datastore with explicit cover stories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that a database file is secure at the top level
    Check {
        file: PathBuf,
        /// Print the machine-readable line report instead of the summary
        #[arg(long)]
        lines: bool,
    },
    /// Open an interactive session against a database file
    Shell {
        file: PathBuf,
        /// Clearance level of the session
        #[arg(long)]
        level: String,
        /// Security-administrator session (implies top clearance)
        #[arg(long)]
        sa: bool,
        /// Seed for the nondeterministic resolution policy
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Resolution policy: pending, nondet, or priority:<Pred>=<L>,..;..
        #[arg(long, default_value = "pending")]
        policy: String,
        /// Suppress timestamps so transcripts are reproducible
        #[arg(long)]
        deterministic: bool,
    },
    /// Rewrite a database file in canonical form
    Format { file: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Check { file, lines } => cmd_check(&file, lines),
        Command::Shell {
            file,
            level,
            sa,
            seed,
            policy,
            deterministic,
        } => shell::run(&file, &level, sa, seed, &policy, deterministic),
        Command::Format { file } => cmd_format(&file),
    }
}

fn load(file: &PathBuf) -> Result<coverstore::Database> {
    let text =
        fs::read_to_string(file).with_context(|| format!("cannot read {}", file.display()))?;
    parse_database(&text).with_context(|| format!("cannot parse {}", file.display()))
}

fn cmd_check(file: &PathBuf, lines: bool) -> Result<ExitCode> {
    let db = load(file)?;
    let top = db.lattice().top().clone();
    let report = is_secure(&db, &top)?;
    if lines {
        for line in report.machine_lines() {
            println!("{line}");
        }
    } else {
        println!("{report}");
    }
    Ok(ExitCode::from(if report.secure { 0 } else { 2 }))
}

fn cmd_format(file: &PathBuf) -> Result<ExitCode> {
    let db = load(file)?;
    fs::write(file, serialize(&db)).with_context(|| format!("cannot write {}", file.display()))?;
    Ok(ExitCode::SUCCESS)
}
