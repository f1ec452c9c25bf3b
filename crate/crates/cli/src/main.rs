use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use islandpf_cli::artifacts::{resolve_output_root, OUT_ENV};
use islandpf_cli::config::{Overrides, RunConfig};
use islandpf_cli::runner::{self, RunError, RunSummary};

/// Island particle filtering for state-space models with a dynamic random
/// environment: run filters, build error surfaces, and audit seeds.
#[derive(Parser)]
#[command(name = "islandpf", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute a configuration and write every requested artifact.
    Run(CommonArgs),
    /// Execute only the error-surface fan-out of a configuration.
    Sweep(CommonArgs),
    /// Check a configuration and report every violation.
    Validate(CommonArgs),
    /// Print the deterministic random-stream tree the configuration uses.
    SeedReport(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Path to a JSON run configuration.
    config: PathBuf,
    /// Override the configured random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured number of filtering steps.
    #[arg(long)]
    horizon: Option<usize>,
    /// Override the configured island count.
    #[arg(long)]
    n1: Option<usize>,
    /// Override the configured per-island particle count.
    #[arg(long)]
    n2: Option<usize>,
    /// Override the configured replication count.
    #[arg(long)]
    replications: Option<usize>,
    /// Pin the worker pool to this many threads (outputs do not depend on it).
    #[arg(long)]
    threads: Option<usize>,
    /// Artifact directory; overrides ISLANDPF_OUT and the configured output_dir.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl CommonArgs {
    fn load(&self) -> Result<RunConfig, String> {
        let text = fs::read_to_string(&self.config)
            .map_err(|e| format!("cannot read {}: {e}", self.config.display()))?;
        let cfg = RunConfig::from_json(&text)
            .map_err(|e| format!("cannot parse {}: {e}", self.config.display()))?;
        Ok(cfg.with_overrides(&Overrides {
            seed: self.seed,
            horizon: self.horizon,
            n1: self.n1,
            n2: self.n2,
            replications: self.replications,
            threads: self.threads,
        }))
    }
}

fn report(summary: &RunSummary) -> ExitCode {
    for artifact in &summary.artifacts {
        println!("wrote {}", artifact.display());
    }
    println!("done in {:.2}s", summary.runtime.as_secs_f64());
    if summary.cell_failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("{} surface cell(s) failed:", summary.cell_failures.len());
        for failure in &summary.cell_failures {
            eprintln!("  - {failure}");
        }
        ExitCode::from(3)
    }
}

fn fail(e: &RunError) -> ExitCode {
    eprint!("error: {e}");
    let text = e.to_string();
    if !text.ends_with('\n') {
        eprintln!();
    }
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = match &cli.cmd {
        Cmd::Run(a) | Cmd::Sweep(a) | Cmd::Validate(a) | Cmd::SeedReport(a) => a,
    };
    let cfg = match args.load() {
        Ok(cfg) => cfg,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(2);
        }
    };

    match &cli.cmd {
        Cmd::Validate(_) => {
            let violations = cfg.validate();
            if violations.is_empty() {
                println!("configuration valid (sha256 {})", cfg.content_hash());
                ExitCode::SUCCESS
            } else {
                eprintln!("configuration invalid ({} violation(s)):", violations.len());
                for v in &violations {
                    eprintln!("  - {v}");
                }
                ExitCode::from(2)
            }
        }
        Cmd::SeedReport(_) => {
            let report = runner::seed_report(&cfg);
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            ExitCode::SUCCESS
        }
        Cmd::Run(_) => {
            let out_root = resolve_output_root(args.output_dir.clone(), std::env::var(OUT_ENV).ok(), &cfg);
            match runner::run(&cfg, &out_root) {
                Ok(summary) => report(&summary),
                Err(e) => fail(&e),
            }
        }
        Cmd::Sweep(_) => {
            let out_root = resolve_output_root(args.output_dir.clone(), std::env::var(OUT_ENV).ok(), &cfg);
            match runner::sweep(&cfg, &out_root) {
                Ok(summary) => report(&summary),
                Err(e) => fail(&e),
            }
        }
    }
}
