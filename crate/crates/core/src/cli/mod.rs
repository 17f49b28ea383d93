//! Batch front end: `solve`, `audit`, `identity`, `oracle` and `sample`
//! commands driven by a JSON run config.

mod commands;
mod config;

pub use config::{AuditConfig, IdentityConfig, OracleConfig, RunConfig, SampleConfig};

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Verb {
    Solve,
    Audit,
    Identity,
    Oracle,
    Sample,
}

impl Verb {
    pub fn name(self) -> &'static str {
        match self {
            Verb::Solve => "solve",
            Verb::Audit => "audit",
            Verb::Identity => "identity",
            Verb::Oracle => "oracle",
            Verb::Sample => "sample",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "screenforge", version, about = "Sequential screening solver, audits and LP oracle")]
pub struct Args {
    #[arg(value_enum)]
    pub verb: Verb,
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory; overrides the config's `out`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("tolerance exceeded: {0}")]
    Tolerance(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Tolerance(_) => 3,
            CliError::Solver(_) => 4,
        }
    }
}

/// Common header of every JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_hash: String,
    pub family: String,
}

pub(crate) struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub verb: Verb,
    pub quiet: bool,
}

impl Context {
    pub fn provenance(&self) -> Provenance {
        Provenance {
            tool: "screenforge",
            version: env!("CARGO_PKG_VERSION"),
            command: self.verb.name(),
            config_hash: self.cfg.hash(),
            family: self.cfg.family.label(),
        }
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::Config(format!("writing {}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        self.write(name, &text)
    }

    pub fn say(&self, line: &str) {
        if !self.quiet {
            println!("{line}");
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = RunConfig::parse(&text).map_err(CliError::Config)?;
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.validate().map_err(CliError::Config)?;
    }
    Ok(cfg)
}

fn configure_threads() {
    if let Some(n) = std::env::var("SCREENFORGE_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Runs a parsed command.
pub fn execute(args: Args) -> Result<(), CliError> {
    configure_threads();
    let cfg = load_config(&args.config, args.seed)?;
    if let Some(c) = &cfg.command {
        if c != args.verb.name() {
            return Err(CliError::Config(format!("config is for `{c}`, not `{}`", args.verb.name())));
        }
    }
    let out = args.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out).map_err(|e| CliError::Config(format!("{}: {e}", out.display())))?;
    let ctx = Context { cfg, out, verb: args.verb, quiet: args.quiet };
    match args.verb {
        Verb::Solve => commands::cmd_solve(&ctx),
        Verb::Audit => commands::cmd_audit(&ctx),
        Verb::Identity => commands::cmd_identity(&ctx),
        Verb::Oracle => commands::cmd_oracle(&ctx),
        Verb::Sample => commands::cmd_sample(&ctx),
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("screenforge: {e}");
            e.exit_code()
        }
    }
}
