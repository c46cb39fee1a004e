//! `torusforge`: batch front end for the normal-form solvers.
//!
//! Exit codes: 0 success, 1 usage or IO error, 2 numerical failure (with a
//! JSON error document on stdout).

mod commands;
mod config;
mod field;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// `document` is the full JSON written to stdout.
    #[error("{message}")]
    Numerical {
        message: String,
        document: serde_json::Value,
    },
}

#[derive(Parser, Debug)]
#[command(
    name = "torusforge",
    version,
    about = "Normal forms of vector fields near invariant tori"
)]
struct Cli {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set spin_orbit.eta=0.05`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Include per-iteration Newton diagnostics.
    #[arg(long, global = true)]
    trace: bool,
    /// Include the computed torus (conjugacy or embedding) in the output.
    #[arg(long, global = true)]
    emit_torus: bool,
    /// Seed of the randomized checks.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the result here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scan the Diophantine conditions of a frequency vector.
    CheckDio,
    /// Newton solve of the normal-form equation for a configured field.
    Solve,
    /// Frequency `nu*` of the quasi-periodic attractor of the spin-orbit model.
    SpinOrbit {
        /// Run the `[sweep]` grid instead of a single point.
        #[arg(long)]
        sweep: bool,
        /// Output format of a sweep.
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Re-check a stored `solve` or `spin-orbit` result against independent oracles.
    Verify {
        /// Result file; overrides `verify.input`.
        input: Option<PathBuf>,
    },
}

pub struct Flags {
    pub trace: bool,
    pub emit_torus: bool,
    pub seed: u64,
    pub jobs: Option<usize>,
}

fn run(cli: Cli) -> Result<String, CliError> {
    let cfg = config::load(cli.config.as_deref(), &cli.sets)?;
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let flags = Flags {
        trace: cli.trace,
        emit_torus: cli.emit_torus,
        seed: cli.seed,
        jobs: cli.jobs,
    };
    match cli.command {
        Command::CheckDio => commands::check_dio(&cfg, &flags),
        Command::Solve => commands::solve(&cfg, &flags),
        Command::SpinOrbit { sweep: false, .. } => commands::spin_orbit(&cfg, &flags),
        Command::SpinOrbit {
            sweep: true,
            format,
        } => commands::sweep(&cfg, &flags, format),
        Command::Verify { input } => commands::verify(&cfg, &flags, input),
    }
}

fn emit(text: &str, output: Option<&PathBuf>) -> std::io::Result<()> {
    match output {
        Some(p) => std::fs::write(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TORUSFORGE_LOG", "warn"))
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let output = cli.output.clone();
    let code = match run(cli) {
        Ok(text) => match emit(&text, output.as_ref()) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
        },
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Numerical { message, document }) => {
            log::error!("{message}");
            let text = serde_json::to_string_pretty(&document).expect("json value") + "\n";
            if let Err(e) = emit(&text, output.as_ref()) {
                eprintln!("error: {e}");
            }
            2
        }
    };
    std::process::exit(code);
}
