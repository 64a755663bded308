//! Command-line front end: configuration, dispatch and output files.
//!
//! Any `--key=value` argument whose key is not one of the named flags is an
//! override for the config key of that name and wins over the config file.
//! Named flags are applied last.

pub mod commands;
pub mod config;
pub mod output;
pub mod svg;
#[cfg(test)]
mod tests_end_to_end;

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use serde_json::Value;

use crate::error::MpbsError;
use config::{override_value, Axis, ConfigError, RunConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad configuration or a simulation/analysis failure. Exit status 1.
    Domain(String),
    /// Unreadable input or unwritable output. Exit status 2.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Domain(m) => write!(f, "error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl From<MpbsError> for CliError {
    fn from(e: MpbsError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Domain(e.0)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "mpbs",
    version,
    about = "Non-Hermitian magnon-photon beam splitter simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON config file (flat keys; see below).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub output: Option<PathBuf>,
    /// Comma-separated output formats: csv, svg.
    #[arg(long, global = true, value_name = "LIST")]
    pub format: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Sweep axis.
    #[arg(long, global = true, value_enum)]
    pub axis: Option<Axis>,
    /// Sweep grid size.
    #[arg(long, global = true)]
    pub points: Option<usize>,
    /// Scatter CSV for `fit`.
    #[arg(long, global = true, value_name = "PATH")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Transfer matrix elements and diagnostics (matrix.csv).
    Matrix,
    /// Effective-Hamiltonian propagator over evolve_tau_s (propagator.csv).
    Evolve,
    /// Fringes over a uniform phase grid (fringe.csv).
    Fringe,
    /// Random-phase (n_s, n_a) scatter with ellipse fit (phase_diagram.csv).
    PhaseDiagram,
    /// Fringe phase difference over a parameter grid (sweep.csv).
    Sweep,
    /// Ellipse fit of an external scatter CSV.
    Fit,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Matrix => "matrix",
            Command::Evolve => "evolve",
            Command::Fringe => "fringe",
            Command::PhaseDiagram => "phase-diagram",
            Command::Sweep => "sweep",
            Command::Fit => "fit",
        }
    }
}

const NAMED_FLAGS: [&str; 9] = [
    "config", "output", "format", "seed", "axis", "points", "input", "help", "version",
];

/// Separate `--key=value` config overrides from arguments meant for clap.
pub fn split_overrides(args: &[String]) -> (Vec<String>, Vec<(String, Value)>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for (i, arg) in args.iter().enumerate() {
        if i > 0 {
            if let Some((key, value)) = arg.strip_prefix("--").and_then(|a| a.split_once('=')) {
                if !NAMED_FLAGS.contains(&key) {
                    overrides.push((key.to_string(), override_value(value)));
                    continue;
                }
            }
        }
        rest.push(arg.clone());
    }
    (rest, overrides)
}

fn help_text() -> String {
    let json = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    let mut s =
        String::from("Config keys (JSON file or --key=value; frequencies in Hz, not angular):\n");
    if let Value::Object(map) = json {
        for (k, v) in map {
            s.push_str(&format!("  {k:<20} default {v}\n"));
        }
    }
    s.push_str(
        "\nDefaults: kappa13 = 3 MHz, beta (eta_per_od) = 0.05, 50 ns probe pulse, seed 0.\n\
         Exit status: 0 success, 1 domain or config error, 2 I/O error.",
    );
    s
}

pub fn load_config(cli: &Cli, overrides: &[(String, Value)]) -> Result<RunConfig, CliError> {
    let text = match &cli.config {
        Some(p) => {
            fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?
        }
        None => "{}".to_string(),
    };
    let mut all = overrides.to_vec();
    if let Some(o) = &cli.output {
        all.push(("output_path".into(), Value::String(o.display().to_string())));
    }
    if let Some(f) = &cli.format {
        all.push(("formats".into(), Value::String(f.clone())));
    }
    if let Some(s) = cli.seed {
        all.push(("seed".into(), Value::from(s)));
    }
    if let Some(a) = cli.axis {
        all.push(("axis".into(), Value::String(a.as_str().into())));
    }
    if let Some(p) = cli.points {
        all.push(("points".into(), Value::from(p)));
    }
    if let Some(i) = &cli.input {
        all.push(("input".into(), Value::String(i.display().to_string())));
    }
    Ok(RunConfig::from_json_with_overrides(&text, &all)?)
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<Value, CliError> {
    let outcome = match command {
        Command::Matrix => commands::matrix(cfg),
        Command::Evolve => commands::evolve(cfg),
        Command::Fringe => commands::fringe(cfg),
        Command::PhaseDiagram => commands::phase_diagram(cfg),
        Command::Sweep => commands::sweep(cfg),
        Command::Fit => commands::fit(cfg),
    }?;
    let mut summary = outcome.summary;
    if !outcome.batch.paths().is_empty() {
        fs::create_dir_all(&cfg.output_path)
            .map_err(|e| CliError::Io(format!("{}: {e}", cfg.output_path.display())))?;
    }
    let written = outcome
        .batch
        .commit()
        .map_err(|e| CliError::Io(e.to_string()))?;
    if let Value::Object(map) = &mut summary {
        map.insert(
            "files".into(),
            written
                .iter()
                .map(|p| Value::String(p.display().to_string()))
                .collect(),
        );
    }
    Ok(summary)
}

/// Full CLI run on raw arguments (including the program name); returns the
/// process exit status.
pub fn run(args: Vec<String>) -> i32 {
    run_with(
        args,
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    )
}

/// [`run`] with explicit output streams for the summary and diagnostics.
pub fn run_with(args: Vec<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let (rest, overrides) = split_overrides(&args);
    let matches = match Cli::command()
        .after_long_help(help_text())
        .try_get_matches_from(rest)
    {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return 1;
        }
    };
    match load_config(&cli, &overrides).and_then(|cfg| execute(cli.command, &cfg)) {
        Ok(summary) => {
            let _ = writeln!(out, "{summary}");
            0
        }
        Err(e) => {
            let _ = writeln!(err, "{e}");
            e.exit_code()
        }
    }
}
