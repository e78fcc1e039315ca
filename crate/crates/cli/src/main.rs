#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map};

mod config;
mod error;
mod exec;
mod output;

use config::{Config, Overrides, SolverName, SweepAxis};
use error::{CliError, CliResult};

/// Driven-dissipative dipole arrays: exact and cumulant-hierarchy solvers.
#[derive(Parser)]
#[command(name = "dipolar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured scenario.
    Run(Common),
    /// Run each value of one parameter axis independently.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Defaults to `[sweep] axis`, then to the scenario's natural axis.
        #[arg(long, value_enum)]
        axis: Option<SweepAxis>,
    },
    /// Write the collective modes of the scenario's array.
    Modes(Common),
    /// Check a config file without running it.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    workers: u64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    solver: Option<SolverName>,
}

impl Common {
    fn load(&self) -> CliResult<Config> {
        Config::load(&self.config)?.resolve(&Overrides {
            solver: self.solver,
            seed: self.seed,
            out: self.out.clone(),
        })
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let started = Instant::now();
    let (common, command, axis) = match &cli.command {
        Command::Run(c) => (c, "run", None),
        Command::Sweep { common, axis } => (common, "sweep", Some(*axis)),
        Command::Modes(c) => (c, "modes", None),
        Command::Validate(c) => (c, "validate", None),
    };
    let cfg = common.load()?;
    let workers = common.workers as usize;
    let report = match (command, axis) {
        ("validate", _) => {
            if let Some(s) = &cfg.sweep {
                cfg.sweep_axis(Some(s.axis))?;
            }
            println!("ok: {} with solver {}", cfg.scenario.name(), cfg.solver());
            return Ok(());
        }
        ("sweep", Some(requested)) => {
            let axis = cfg.sweep_axis(requested)?;
            exec::sweep(&cfg, axis, workers)?
        }
        ("modes", _) => exec::modes(&cfg)?,
        _ => exec::run(&cfg, workers)?,
    };
    let mut meta = Map::new();
    meta.insert("tool".into(), json!("dipolar"));
    meta.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    meta.insert("core_version".into(), json!(dipolar::VERSION));
    meta.insert("command".into(), json!(command));
    meta.insert("config_path".into(), json!(common.config.display().to_string()));
    meta.insert(
        "config".into(),
        serde_json::to_value(&cfg).map_err(|e| CliError::Io(format!("metadata: {e}")))?,
    );
    meta.insert("workers".into(), json!(workers));
    let unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    meta.insert(
        "timing".into(),
        json!({ "wall_seconds": started.elapsed().as_secs_f64(), "finished_unix": unix }),
    );
    output::write_report(&cfg.output.dir, &report, meta)?;
    for f in &report.failures {
        eprintln!("warning: {} failed: {}", f.value, f.error);
    }
    if !report.failures.is_empty() {
        eprintln!("{} failure(s) recorded in metadata.json", report.failures.len());
    }
    match report.deferred {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
