use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use bandlab::exec::configure_threads;
use bandlab::harness::{self, emit_report, ExperimentConfig, Report, ReportFormat};
use clap::{Args, Parser, Subcommand};

/// Random band matrix experiments.
#[derive(Parser)]
#[command(name = "bandlab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a variance profile and fit admissibility constants.
    Profile(Common),
    /// Draw matrices and write them as CSV.
    Sample(Common),
    /// Deterministic identities, convergence orders and M-term checks.
    Mcheck(Common),
    /// Multi-resolvent local laws.
    Locallaw(Common),
    /// Decay profile of E|G|² against the two-point kernel.
    Decay(Common),
    /// Quantum unique ergodicity and delocalization of bulk eigenvectors.
    Que(Common),
    /// η-scaling of chains with traceless observables.
    Traceless(Common),
    /// Bulk gap-ratio statistics against reference ensembles.
    Spacing(Common),
    /// Characteristic flow, Ψ trace and regularization gain.
    Flow(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the report and artifacts.
    #[arg(long, default_value = "bandlab-out")]
    out: PathBuf,
    /// Number of samples (overrides the config).
    #[arg(long)]
    samples: Option<usize>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Also write SVG plots.
    #[arg(long)]
    svg: bool,
}

type Runner = fn(&ExperimentConfig) -> bandlab::Result<Report>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let (runner, common): (Runner, Common) = match cli.command {
        Command::Profile(c) => (harness::run_profile, c),
        Command::Sample(c) => (harness::run_sample, c),
        Command::Mcheck(c) => (harness::run_mcheck, c),
        Command::Locallaw(c) => (harness::run_local_law, c),
        Command::Decay(c) => (harness::run_decay_profile, c),
        Command::Que(c) => (harness::run_que, c),
        Command::Traceless(c) => (harness::run_traceless_scaling, c),
        Command::Spacing(c) => (harness::run_spacing, c),
        Command::Flow(c) => (harness::run_flow, c),
    };
    let mut cfg = ExperimentConfig::load(&common.config)
        .with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(samples) = common.samples {
        cfg.samples = samples;
    }
    if common.threads.is_some() {
        cfg.threads = common.threads;
    }
    cfg.svg |= common.svg;
    cfg.out = Some(common.out.clone());
    cfg.validate()?;
    configure_threads(cfg.threads);
    let report = runner(&cfg)?;
    let written = emit_report(&report, &common.out, ReportFormat { svg: cfg.svg })?;
    for row in &report.rows {
        println!(
            "{:<4} {:<36} measured {:<12.6e} bound {:.6e}",
            if row.pass { "PASS" } else { "FAIL" },
            row.check,
            row.measured,
            row.bound
        );
    }
    for path in written.iter().chain(&report.artifacts) {
        println!("wrote {}", path.display());
    }
    Ok(report.passed())
}
