//! Experiment runner: config parsing, orchestration, run ledger and
//! byte-stable result files.

pub mod canonical;
pub mod commands;
pub mod config;
pub mod ledger;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::commands::Outcome;
use crate::config::RunConfig;
use crate::ledger::RunLedgerEntry;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_RESOURCE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] polymer_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Solver(e) if e.is_window_exhausted() => EXIT_RESOURCE,
            CliError::Solver(polymer_core::Error::Numerical(_)) => EXIT_RESOURCE,
            CliError::Solver(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_RESOURCE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "polymer-lab", version, about = "Directed polymer and last-passage experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Clone, Args)]
pub struct RunFlags {
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "POLYMER_LAB_WORKERS")]
    pub workers: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    pub master_seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the kinetic energy assumptions.
    Audit(Common),
    /// Minimal action of one realization.
    Solve(Common),
    /// Log partition function of one realization.
    Partition(Common),
    /// Shape function panels.
    Shape(Common),
    /// Full invariant battery.
    Check(Common),
    /// Inspect, verify or replay the run ledger.
    Ledger(LedgerArgs),
}

#[derive(Debug, Clone, Args)]
pub struct LedgerArgs {
    /// Config whose output directory holds the ledger.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunFlags,
    /// Check digests and that each result file has exactly one entry.
    #[arg(long)]
    pub verify: bool,
    /// Recompute a run from its entry and compare output digests.
    #[arg(long)]
    pub replay: Option<String>,
}

fn workers(flags: &RunFlags) -> usize {
    flags
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1)
}

/// Runs a command on a resolved config, without touching the filesystem.
pub fn execute(name: &str, cfg: &RunConfig, workers: usize) -> Result<Outcome, CliError> {
    match name {
        "audit" => commands::audit(cfg),
        "solve" => commands::solve(cfg),
        "partition" => commands::partition(cfg),
        "shape" => commands::shape(cfg, workers),
        "check" => commands::check(cfg, workers),
        other => Err(CliError::Config(format!("unknown command {other}"))),
    }
}

fn out_dir(cfg: Option<&RunConfig>, flags: &RunFlags) -> PathBuf {
    flags
        .out
        .clone()
        .or_else(|| cfg.map(|c| PathBuf::from(&c.output.directory)))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn record(name: &str, common: &Common) -> Result<i32, CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.run.master_seed {
        cfg.experiment.master_seed = seed;
    }
    let out = out_dir(Some(&cfg), &common.run);
    let workers = workers(&common.run);
    let start = Instant::now();
    let outcome = execute(name, &cfg, workers)?;
    for line in &outcome.summary {
        println!("{line}");
    }
    let hash = cfg.hash();
    let run_id = ledger::next_run_id(&out, &hash);
    let outputs = ledger::write_outputs(&out, &run_id, &outcome.files)?;
    let entry = RunLedgerEntry {
        run_id: run_id.clone(),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        command: name.to_string(),
        config_hash: hash,
        config: cfg.canonical(),
        version: ledger::artifact_version(),
        workers,
        exit_code: outcome.exit_code,
        outputs,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    ledger::append(&out, &entry)?;
    println!("run {run_id} written to {}", out.join(&run_id).display());
    Ok(outcome.exit_code)
}

fn ledger_command(args: &LedgerArgs) -> Result<i32, CliError> {
    let cfg = match &args.config {
        Some(p) => Some(RunConfig::load(p)?),
        None => None,
    };
    let out = out_dir(cfg.as_ref(), &args.run);
    let entries = ledger::read(&out)?;
    if let Some(id) = &args.replay {
        let entry = entries
            .iter()
            .find(|e| &e.run_id == id)
            .ok_or_else(|| CliError::Config(format!("no ledger entry {id}")))?;
        return replay(entry, workers(&args.run));
    }
    if args.verify {
        let report = ledger::verify(&out)?;
        println!("{} entries, {} files checked", report.entries, report.files_checked);
        for p in &report.problems {
            println!("problem: {p}");
        }
        return Ok(if report.problems.is_empty() { EXIT_OK } else { EXIT_FAILED });
    }
    for e in &entries {
        println!(
            "{} {} {} exit={} files={} {}s",
            e.run_id,
            e.timestamp,
            e.command,
            e.exit_code,
            e.outputs.len(),
            canonical::g17(e.wall_time_s)
        );
    }
    Ok(EXIT_OK)
}

fn replay(entry: &RunLedgerEntry, workers: usize) -> Result<i32, CliError> {
    let cfg: RunConfig =
        serde_json::from_str(&entry.config).map_err(|e| CliError::Config(format!("ledger config: {e}")))?;
    if cfg.hash() != entry.config_hash {
        return Err(CliError::Config("ledger config does not match its hash".into()));
    }
    let outcome = execute(&entry.command, &cfg, workers)?;
    let mut same = outcome.exit_code == entry.exit_code && outcome.files.len() == entry.outputs.len();
    for ((name, bytes), rec) in outcome.files.iter().zip(&entry.outputs) {
        let ok = rec.path.ends_with(&format!("/{name}")) && canonical::sha256_hex(bytes) == rec.sha256;
        println!("{} {}", if ok { "identical" } else { "DIFFERS" }, rec.path);
        same &= ok;
    }
    Ok(if same { EXIT_OK } else { EXIT_FAILED })
}

/// Parses `args` (program name first) and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Audit(c) => record("audit", c),
        Command::Solve(c) => record("solve", c),
        Command::Partition(c) => record("partition", c),
        Command::Shape(c) => record("shape", c),
        Command::Check(c) => record("check", c),
        Command::Ledger(a) => ledger_command(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
