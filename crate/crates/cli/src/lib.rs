//! Command-line driver: grounding evaluation, offline replay, interactive
//! simulated runs and a coordinate-parser debugger.
//!
//! Exit codes: 0 on completion, 1 on I/O or input-data errors, 2 on
//! configuration errors.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use duostep_core::ScreenDims;
use thiserror::Error;

pub use commands::{cmd_ground, cmd_parse, cmd_replay, cmd_run};
pub use config::{CliConfig, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "duostep", version, about = "Two-stage GUI agent harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score a locator on grounding records.
    Ground(Common),
    /// Score recorded steps (offline or desktop-script records).
    Replay(Common),
    /// Run the agent on a simulated task suite.
    Run(Common),
    /// Extract a point from model output text and print it as JSON.
    Parse(ParseArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON config file; `${VAR}` is replaced from the environment.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// scripted:<path> | always-click:<interpreter>
    #[arg(long)]
    pub interpreter: Option<String>,
    /// oracle | naive | noisy:<sigma>[,<seed>]
    #[arg(long)]
    pub locator: Option<String>,
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Task suite JSON.
    #[arg(long)]
    pub env: Option<PathBuf>,
    /// Output directory (default `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Worker count; 1 runs sequentially, 0 uses every core.
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Permit HTTP backends.
    #[arg(long)]
    pub allow_network: bool,
}

impl From<Common> for Overrides {
    fn from(c: Common) -> Self {
        Overrides {
            config: c.config,
            interpreter: c.interpreter,
            locator: c.locator,
            records: c.records,
            env: c.env,
            out: c.out,
            max_steps: c.max_steps,
            parallelism: c.parallelism,
            seed: c.seed,
            allow_network: c.allow_network,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ParseArgs {
    /// Text to parse; use --file to read it from a file instead.
    #[arg(allow_hyphen_values = true)]
    pub text: Option<String>,
    #[arg(long, conflicts_with = "text")]
    pub file: Option<PathBuf>,
    /// Screen size used when the text holds pixel coordinates.
    #[arg(long, default_value = "1000x1000", value_parser = parse_dims)]
    pub dims: ScreenDims,
}

fn parse_dims(s: &str) -> Result<ScreenDims, String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let w: u32 = w.trim().parse().map_err(|_| "bad width")?;
    let h: u32 = h.trim().parse().map_err(|_| "bad height")?;
    ScreenDims::new(w, h).map_err(|e| e.to_string())
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ground(c) => cmd_ground(&CliConfig::resolve(c.into())?),
        Command::Replay(c) => cmd_replay(&CliConfig::resolve(c.into())?),
        Command::Run(c) => cmd_run(&CliConfig::resolve(c.into())?),
        Command::Parse(p) => {
            let text = match (&p.text, &p.file) {
                (Some(t), _) => t.clone(),
                (None, Some(f)) => std::fs::read_to_string(f)
                    .map_err(|e| CliError::Io(format!("cannot read {}: {e}", f.display())))?,
                (None, None) => return Err(CliError::Config("give the text to parse or --file".into())),
            };
            cmd_parse(&text, p.dims, &mut std::io::stdout().lock())
        }
    }
}

/// Runs the CLI and maps the outcome to an exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("duostep: {e}");
            e.exit_code()
        }
    }
}
