use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use presence_lab::{Command, Invocation, LabError, Suite, WORKERS_ENV};

#[derive(Parser)]
#[command(name = "presence-lab", version, about = "Presence-probability experiments and verification suites")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo sample count (overrides params.n_runs).
    #[arg(long)]
    runs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = WORKERS_ENV, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Spectral tables: cumulant, rate function, exponents.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Branching random walk operations.
    Brw {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fragmentation operations.
    Frag {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run an acceptance suite.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, config, common) = match cli.command {
        Cmd::Analyze { config, common } => (Command::Analyze, Some(config), common),
        Cmd::Brw { config, common } => (Command::Brw, Some(config), common),
        Cmd::Frag { config, common } => (Command::Frag, Some(config), common),
        Cmd::Verify { suite, common } => (Command::Verify(suite), None, common),
    };
    let inv = Invocation {
        command,
        config,
        seed: common.seed,
        runs: common.runs,
        out: common.out,
        workers: common.workers,
    };
    let start = Instant::now();
    let result = presence_lab::execute(&inv).and_then(|(report, out)| {
        report.write(&out, Some(start.elapsed()))?;
        Ok(report)
    });
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("presence-lab: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    for c in &report.criteria {
        let verdict = if c.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {:<24} {verdict}  {}", c.id, c.name, c.detail);
    }
    match report.failed() {
        0 => ExitCode::SUCCESS,
        failed => {
            let e = LabError::CriteriaFailed {
                failed,
                total: report.criteria.len(),
            };
            eprintln!("presence-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
