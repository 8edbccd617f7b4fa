//! Configuration-driven experiments over `presence-core`: spectral tables,
//! branching random walk and fragmentation estimators, and the verification
//! suites, with byte-reproducible CSV and JSON output.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod table;
pub mod verify;

use std::path::PathBuf;
use std::time::Instant;

use presence_core::Runner;

pub use config::ExperimentConfig;
pub use error::{LabError, Result};
pub use report::RunReport;
pub use verify::Suite;

/// Default worker count when `--workers` is not given.
pub const WORKERS_ENV: &str = "PRESENCE_LAB_WORKERS";
pub const DEFAULT_OUT: &str = "presence-lab-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Brw,
    Frag,
    Verify(Suite),
}

#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub out: Option<PathBuf>,
    pub workers: usize,
}

impl Invocation {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            config: None,
            seed: None,
            runs: None,
            out: None,
            workers: 1,
        }
    }
}

fn load(inv: &Invocation) -> Result<ExperimentConfig> {
    let path = inv
        .config
        .as_ref()
        .ok_or_else(|| LabError::config("--config", "required for this command"))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = inv.seed {
        cfg.seed = seed;
    }
    if let Some(runs) = inv.runs {
        cfg.params.n_runs = Some(runs);
    }
    if let Some(out) = &inv.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

/// Runs the command without touching the filesystem beyond reading the config.
/// Returns the report and the output directory it is meant for.
pub fn execute(inv: &Invocation) -> Result<(RunReport, PathBuf)> {
    match inv.command {
        Command::Verify(suite) => {
            if inv.config.is_some() {
                return Err(LabError::config("--config", "verify suites take no config"));
            }
            if inv.runs.is_some() {
                return Err(LabError::config("--runs", "verify suites use fixed sample sizes"));
            }
            let runner = Runner::new(inv.seed.unwrap_or(0)).with_workers(inv.workers);
            let out = inv.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
            Ok((verify::run_suite(suite, &runner)?, out))
        }
        cmd => {
            let cfg = load(inv)?;
            let runner = Runner::new(cfg.seed).with_workers(inv.workers);
            let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
            let report = match cmd {
                Command::Analyze => commands::analyze(&cfg)?,
                Command::Brw => commands::brw(&cfg, &runner)?,
                Command::Frag => commands::frag(&cfg, &runner)?,
                Command::Verify(_) => unreachable!(),
            };
            Ok((report, out))
        }
    }
}

/// [`execute`], then write the artifacts. A verify run with failing criteria
/// still writes its report before returning [`LabError::CriteriaFailed`].
pub fn run(inv: &Invocation) -> Result<RunReport> {
    let start = Instant::now();
    let (report, out) = execute(inv)?;
    report.write(&out, Some(start.elapsed()))?;
    let failed = report.failed();
    if failed > 0 {
        return Err(LabError::CriteriaFailed {
            failed,
            total: report.criteria.len(),
        });
    }
    Ok(report)
}
