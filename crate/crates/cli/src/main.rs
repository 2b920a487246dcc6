mod commands;
mod config;
mod error;
mod render;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::*;
use config::PipelineConfig;
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "morphspan", version, about = "Organ morphometry across the lifespan")]
struct Cli {
    /// JSON configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for per-scan and per-feature work.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic mask with known morphology and a JSON sidecar.
    Phantom(phantom::PhantomArgs),
    /// Measure the thirteen shape features of every mask in a manifest.
    Extract(extract::ExtractArgs),
    /// Organ volumes plus structural and bounding-box QC flags.
    QcFlags(qc::QcFlagsArgs),
    /// Pick one scan per session by closeness to the lifespan curves.
    QcSelect(qc::QcSelectArgs),
    /// Label patients as control, t2d or excluded from coded events.
    Label(cohort::LabelArgs),
    /// Age- and sex-matched control/t2d subset.
    Match(cohort::MatchArgs),
    /// Boxplot summaries by sex and age decade.
    Boxstats(stats::BoxstatsArgs),
    /// Per-modality polynomial trend with a 95% band.
    FitPoly(stats::FitPolyArgs),
    /// BCCG models of each feature with centile tables.
    FitGamlss(model::FitGamlssArgs),
    /// Centiles from a saved fit at one covariate setting.
    Centiles(model::CentilesArgs),
    /// Benjamini-Hochberg adjusted p-values.
    Fdr(stats::FdrArgs),
    /// SVG figure from a centiles, boxstats or trend table.
    Plot(plot::PlotArgs),
    /// Maximum intensity projection of a mask as SVG.
    Mip(plot::MipArgs),
    /// Every step from masks to figures.
    Pipeline(pipeline::PipelineArgs),
    /// Write the synthetic demo inputs.
    Demo(demo::DemoArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    cfg.validate()?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::validation(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Phantom(a) => phantom::run(a),
        Command::Extract(a) => extract::run(a, &cfg),
        Command::QcFlags(a) => qc::run_flags(a, &cfg),
        Command::QcSelect(a) => qc::run_select(a, &cfg),
        Command::Label(a) => cohort::run_label(a, &cfg),
        Command::Match(a) => cohort::run_match(a, &cfg),
        Command::Boxstats(a) => stats::run_boxstats(a),
        Command::FitPoly(a) => stats::run_fit_poly(a, &cfg),
        Command::FitGamlss(a) => model::run_fit(a, &cfg),
        Command::Centiles(a) => model::run_centiles(a, &cfg),
        Command::Fdr(a) => stats::run_fdr(a),
        Command::Plot(a) => plot::run(a),
        Command::Mip(a) => plot::run_mip(a),
        Command::Pipeline(a) => pipeline::run(a, &cfg),
        Command::Demo(a) => demo::run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
