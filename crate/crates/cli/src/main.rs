//! `pdmarket`: solve, certify and analyze price-discriminating Fisher markets.

mod commands;
mod error;
mod report;
mod scenario;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "pdmarket", version, about = "Fisher markets with a price-discriminating middleman")]
pub struct Cli {
    #[command(flatten)]
    pub flags: Flags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Flags {
    /// Tolerance for convergence and certification.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long = "max-iter", global = true, default_value_t = 10_000)]
    pub max_iter: usize,
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Number of ascents for quasiconcave markets.
    #[arg(long, global = true, default_value_t = 32)]
    pub starts: usize,
    #[arg(long = "case", global = true, value_enum, default_value_t = Case::Concave)]
    pub case: Case,
    /// Grid step for oracle and welfare enumerations.
    #[arg(long, global = true, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    Concave,
    Quasiconcave,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    First,
    Second,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "command")]
pub enum Command {
    /// Compute the equilibrium and certify it.
    Solve { scenario: PathBuf },
    /// Certify an allocation and prices (a solve report works as input).
    Verify { scenario: PathBuf, solution: PathBuf },
    /// Per-buyer best rate r* and the U(r) curve.
    Rates {
        scenario: PathBuf,
        /// Comma-separated prices; defaults to the equilibrium prices.
        #[arg(long, value_delimiter = ',')]
        prices: Option<Vec<f64>>,
        /// Buyer whose curve is written in CSV mode.
        #[arg(long, default_value_t = 0)]
        buyer: usize,
        /// Curve points, log-spaced over [r*/10, 10 r*].
        #[arg(long, default_value_t = 41)]
        points: usize,
    },
    /// First welfare check of the equilibrium, or moneys supporting a target.
    Welfare {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Comma-separated target utilities (second mode).
        #[arg(long, value_delimiter = ',')]
        target: Option<Vec<f64>>,
    },
    /// The kinked quasiconcave market where the second welfare theorem fails.
    Counterexample {
        #[arg(long, default_value_t = 0.25)]
        a: f64,
        #[arg(long, default_value_t = pdmarket_core::welfare::COUNTEREXAMPLE_DELTA)]
        delta: f64,
    },
    /// Brute-force grid optimum of the log-welfare objective.
    Oracle {
        scenario: PathBuf,
        /// Enumerate only allocations that sell out every good (exact for
        /// nondecreasing utilities).
        #[arg(long)]
        saturate: bool,
        /// Also list grid points that pass the equilibrium certificate at --tol.
        #[arg(long)]
        scan: bool,
    },
}

/// What a command produced: the document for standard output and the exit
/// code (0 certified, 2 not converged or not certified).
pub struct Output {
    pub body: String,
    pub code: u8,
    pub warnings: Vec<serde_json::Value>,
}

fn emit_stderr(v: &serde_json::Value) {
    let _ = writeln!(std::io::stderr().lock(), "{v}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let message: Vec<&str> = text
                .lines()
                .take_while(|l| !l.is_empty() && !l.starts_with("Usage:"))
                .map(str::trim)
                .collect();
            emit_stderr(&CliError::usage(message.join(" ").trim_start_matches("error: ")).to_json());
            return ExitCode::from(1);
        }
    };
    match commands::run(&cli) {
        Ok(out) => {
            for w in &out.warnings {
                emit_stderr(w);
            }
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(out.body.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                return ExitCode::from(1);
            }
            ExitCode::from(out.code)
        }
        Err(e) => {
            emit_stderr(&e.to_json());
            ExitCode::from(1)
        }
    }
}
