//! Command-line runner for the simulation studies, the planted STRF check and
//! filtering of recorded data.

mod config;
mod output;
mod runs;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use sparse_ppf::Error;

use config::{ExperimentConfig, Mode, Overrides};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Output(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Output(_) => "output",
            CliError::Core(e) if is_numerical(e) => "numerical",
            CliError::Core(Error::Io(_)) => "io",
            CliError::Core(_) => "invalid_input",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if is_numerical(e) => 1,
            _ => 2,
        }
    }
}

fn is_numerical(e: &Error) -> bool {
    matches!(
        e,
        Error::NonFinite(_)
            | Error::Diverged(_)
            | Error::Degenerate(_)
            | Error::NotConverged { .. }
            | Error::InsufficientData(_)
    )
}

#[derive(Debug, Parser)]
#[command(name = "sparse-ppf", version, about = "Sparse adaptive point process filtering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Runs one experiment and writes its CSV outputs and manifest.
    Run(RunArgs),
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated filters: l1_ppf1, l1_ppf0, ssppf, sdppf.
    #[arg(long)]
    filters: Option<String>,
    /// Number of realizations in study 1.
    #[arg(long)]
    ensemble: Option<usize>,
    /// Comma-separated penalty grid for cross-validation.
    #[arg(long = "cv-grid")]
    cv_grid: Option<String>,
    /// Window stride between confidence intervals.
    #[arg(long = "stride-ci")]
    stride_ci: Option<usize>,
    /// Also write a gnuplot script.
    #[arg(long)]
    gnuplot: bool,
}

fn report(e: &CliError) -> ExitCode {
    let line = serde_json::json!({
        "error": e.kind(),
        "exit_code": e.exit_code(),
        "message": e.to_string(),
    });
    eprintln!("{line}");
    ExitCode::from(e.exit_code())
}

fn configure_threads() -> Result<usize, CliError> {
    if let Ok(v) = std::env::var("SPARSE_PPF_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("SPARSE_PPF_THREADS must be a positive integer, found {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    }
    Ok(rayon::current_num_threads())
}

fn execute(args: RunArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let threads = configure_threads()?;
    let file = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let mode = args
        .mode
        .or(file.mode)
        .ok_or_else(|| CliError::Config("no mode given on the command line or in the config".into()))?;
    let overrides = Overrides {
        seed: args.seed.or(file.seed),
        filters: args.filters.as_deref().map(config::parse_filters).transpose()?,
        ensemble: args.ensemble,
        cv_grid: args.cv_grid.as_deref().map(config::parse_grid).transpose()?,
        stride_ci: args.stride_ci,
    };
    check_applicable(mode, &overrides)?;
    let out = args.out.or(file.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::Output(format!("cannot create output directory {}: {e}", out.display())))?;
    let gnuplot = args.gnuplot || file.gnuplot;

    let run = runs::run(mode, &file, &overrides, &out, gnuplot)?;
    output::write_manifest(
        &out,
        &output::Manifest {
            mode,
            seed: run.seed,
            config: args.config.as_deref(),
            threads,
            wall_seconds: started.elapsed().as_secs_f64(),
            resolved: &run.resolved,
            files: &run.files,
        },
    )?;
    for line in &run.summary {
        println!("{line}");
    }
    Ok(())
}

fn check_applicable(mode: Mode, o: &Overrides) -> Result<(), CliError> {
    let reject = |flag: &str| Err(CliError::Config(format!("--{flag} does not apply to mode {}", mode.label())));
    if o.ensemble.is_some() && mode != Mode::Study1 {
        return reject("ensemble");
    }
    if o.stride_ci.is_some() && matches!(mode, Mode::Study1 | Mode::Strf) {
        return reject("stride-ci");
    }
    if mode == Mode::Strf && o.filters.is_some() {
        return reject("filters");
    }
    if mode == Mode::Strf && o.cv_grid.is_some() {
        return reject("cv-grid");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => match execute(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => report(&e),
        },
    }
}
