//! `whisker`: batch driver for the whiskered-torus solver.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
//!
//! Exit status: 0 on success, 2 when the solver stops in a controlled way
//! (artifacts and the report are still written), 1 for usage errors.

mod artifacts;
mod config;
mod plugin;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::Command;

#[derive(Parser, Debug)]
#[command(name = "whisker", version, about = "Whiskered invariant tori of symplectic maps and flows")]
struct Cli {
    /// What to do with the configuration.
    #[arg(value_enum)]
    command: Command,
    /// Run configuration (TOML).
    config: PathBuf,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Start from, or check, this coefficient file.
    #[arg(long = "seed-torus")]
    seed_torus: Option<PathBuf>,
    /// Grid points per angle; must be a power of two.
    #[arg(long)]
    grid: Option<usize>,
    /// Suppress progress and tables.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = run::init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    let opts = run::Options {
        command: cli.command,
        config: cli.config,
        out: cli.out,
        seed_torus: cli.seed_torus,
        grid: cli.grid,
        quiet: cli.quiet,
    };
    match run::run(&opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<run::Controlled>() => {
            eprintln!("solver stopped: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
