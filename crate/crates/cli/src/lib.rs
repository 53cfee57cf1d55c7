//! Command-line front end: configuration handling, subcommands and output
//! files.

pub mod config;
mod commands;
mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;

/// Version of the `result.json` layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable selecting the worker count.
pub const THREADS_ENV: &str = "PATHWIT_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("numerical guard: {0}")]
    Guard(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// 1 for invalid input, 2 for numerical guards.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Guard(_) => 2,
            _ => 1,
        }
    }
}

impl From<pathwit_core::Error> for CliError {
    fn from(e: pathwit_core::Error) -> Self {
        match e {
            pathwit_core::Error::Invalid { field, reason } => CliError::Invalid { field, reason },
            other => CliError::Guard(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "pathwit",
    version,
    about = "Entanglement witness pipeline for single-photon path-entangled states",
    after_help = "Any configuration field can be overridden with --<dot.path> <value>, e.g. --source.eta 0.4 or --N 8.\n\
                  Values are read as JSON when possible (numbers, booleans, arrays, null), otherwise as strings.\n\
                  Set PATHWIT_THREADS to fix the worker count."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// JSON configuration file; without it every field takes its default.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for result.json, curve.csv and run.log.
    #[arg(short, long, global = true)]
    pub out: Option<PathBuf>,
    /// Also write curve.csv.
    #[arg(long, global = true)]
    pub csv: bool,
    /// Configuration override as `key=value`; `--<key> <value>` is rewritten to this.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Worst-case biseparable bound and the per-bipartition table.
    Bound(CmdArgs),
    /// Expected observables, bound and violation of the source model.
    Simulate(CmdArgs),
    /// Monte Carlo trials of the three settings.
    Sample(CmdArgs),
    /// Hoeffding p-value of measured averages against the bound.
    Pvalue(PvalueArgs),
    /// Violation of every subset of at least two parties.
    Subsets(CmdArgs),
    /// Violation against the party count.
    ScanN(CmdArgs),
    /// Largest violating party count against the transmission.
    ScanEta(CmdArgs),
    /// Grid search for lambda and mu.
    Tune(CmdArgs),
    /// Print the resolved configuration.
    Validate(CmdArgs),
}

#[derive(Debug, Clone, clap::Args)]
pub struct CmdArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, clap::Args)]
pub struct PvalueArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// TrialCounts JSON; overrides `pvalue.counts`.
    #[arg(long)]
    pub counts: Option<PathBuf>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Bound(_) => "bound",
            Command::Simulate(_) => "simulate",
            Command::Sample(_) => "sample",
            Command::Pvalue(_) => "pvalue",
            Command::Subsets(_) => "subsets",
            Command::ScanN(_) => "scan-n",
            Command::ScanEta(_) => "scan-eta",
            Command::Tune(_) => "tune",
            Command::Validate(_) => "validate",
        }
    }

    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::Pvalue(a) => &a.common,
            Command::Bound(a)
            | Command::Simulate(a)
            | Command::Sample(a)
            | Command::Subsets(a)
            | Command::ScanN(a)
            | Command::ScanEta(a)
            | Command::Tune(a)
            | Command::Validate(a) => &a.common,
        }
    }
}

const OWN_FLAGS: [&str; 11] = [
    "--config", "-c", "--out", "-o", "--csv", "--set", "--counts", "--help", "-h", "--version", "-V",
];

/// Rewrites `--dot.path value` pairs that are not flags of the tool into
/// `--set dot.path=value`.
pub fn rewrite_overrides(args: Vec<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len());
    let mut it = args.into_iter().peekable();
    while let Some(a) = it.next() {
        let flag = a.split('=').next().unwrap_or("");
        if a.starts_with("--") && a.len() > 2 && !OWN_FLAGS.contains(&flag) {
            let key = &a[2..];
            let pair = match key.split_once('=') {
                Some((k, v)) => format!("{k}={v}"),
                None => match it.next() {
                    Some(v) => format!("{key}={v}"),
                    None => format!("{key}="),
                },
            };
            out.push("--set".into());
            out.push(pair);
        } else {
            out.push(a);
        }
    }
    out
}

fn parse_overrides(set: &[String]) -> Result<Vec<(String, String)>, CliError> {
    set.iter()
        .map(|s| {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::invalid(s.clone(), "override needs the form key=value"))?;
            if v.is_empty() {
                return Err(CliError::invalid(k, "override is missing a value"));
            }
            Ok((k.to_string(), v.to_string()))
        })
        .collect()
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::invalid(THREADS_ENV, format!("{raw:?} is not a positive integer")))?;
    // a second initialization in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Loads the configuration named on the command line with its overrides.
pub fn load_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let text = match &common.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        None => "{}".to_string(),
    };
    let mut cfg = config::load(&text, &parse_overrides(&common.set)?)?;
    if common.csv {
        cfg.output.csv = true;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    configure_threads()?;
    let common = cli.command.common();
    let cfg = load_config(common)?;
    if let Command::Validate(_) = cli.command {
        println!("{}", config_json(&cfg)?);
        return Ok(());
    }
    let mut out = output::Output::new(common.out.as_deref(), cli.command.name(), &cfg)?;
    out.log(&format!("start {}", cli.command.name()));
    let result = commands::dispatch(&cli.command, &cfg, &mut out);
    match &result {
        Ok(()) => out.log("done"),
        Err(e) => out.log(&format!("error: {e}")),
    }
    result
}

/// Canonical JSON of a resolved configuration.
pub fn config_json(cfg: &RunConfig) -> Result<String, CliError> {
    serde_json::to_string_pretty(cfg).map_err(|e| CliError::Io(e.to_string()))
}

/// Runs the tool on `args` (including the program name) and returns the
/// exit code.
pub fn run(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(rewrite_overrides(args)) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
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
