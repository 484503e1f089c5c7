//! Argument parsing and dispatch. Exit codes: 0 success, 1 invalid input or
//! configuration, 2 numerical failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{self, Run};
use crate::config::RunConfig;
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "ftd", version, about = "Trajectory-matching dataset distillation with flat teachers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train teacher trajectories and write FTDT files.
    Buffer(RunArgs),
    /// Distill synthetic sets from the recorded trajectories.
    Distill(RunArgs),
    /// Train fresh networks on each synthetic set and report test accuracy.
    Eval(RunArgs),
    /// Error ledger, loss-difference curves, ablation and sharpness.
    Diagnose(RunArgs),
    /// Rank a ConvNet grid on real and synthetic data.
    Nas(RunArgs),
    /// Collect the summaries written so far into report.json.
    Report(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Flat JSON configuration file with dotted keys.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set buffer.rho=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Command {
    fn parts(&self) -> (&'static str, &RunArgs) {
        match self {
            Command::Buffer(a) => ("buffer", a),
            Command::Distill(a) => ("distill", a),
            Command::Eval(a) => ("eval", a),
            Command::Diagnose(a) => ("diagnose", a),
            Command::Nas(a) => ("nas", a),
            Command::Report(a) => ("report", a),
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let (name, args) = cli.command.parts();
    let cfg = RunConfig::load(args.config.as_deref(), &args.set)?;
    let mut run = Run::new(cfg, name)?;
    match cli.command {
        Command::Buffer(_) => commands::buffer(&mut run)?,
        Command::Distill(_) => commands::distill(&mut run)?,
        Command::Eval(_) => commands::eval(&mut run)?,
        Command::Diagnose(_) => commands::diagnose(&mut run)?,
        Command::Nas(_) => commands::nas(&mut run)?,
        Command::Report(_) => commands::report(&mut run)?,
    }
    run.finish()
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
