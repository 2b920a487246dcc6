//! End-to-end run. Each step writes its file and the next step reads it
//! back, exactly as the standalone subcommands do.

use std::path::{Path, PathBuf};

use clap::Args;
use log::info;
use morphspan_core::morphometrics::FEATURE_NAMES;

use super::plot::{render, PlotKind};
use super::{cohort, extract, model, stats};
use crate::config::PipelineConfig;
use crate::error::CliResult;
use crate::table::write_file;

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Scan manifest (scan_id, patient_id, path).
    #[arg(long)]
    manifest: PathBuf,
    /// Patient table; `patients.csv` beside the manifest by default.
    #[arg(long)]
    patients: Option<PathBuf>,
    /// Event table; `events.csv` beside the manifest by default.
    #[arg(long)]
    events: Option<PathBuf>,
    /// Code lists; the config entry, else `codes.json` beside the manifest.
    #[arg(long)]
    codes: Option<PathBuf>,
    #[arg(long, default_value = "morphspan_out")]
    out_dir: PathBuf,
}

fn beside(manifest: &Path, name: &str) -> PathBuf {
    manifest.parent().unwrap_or(Path::new("")).join(name)
}

pub fn run(args: PipelineArgs, cfg: &PipelineConfig) -> CliResult<()> {
    let out = &args.out_dir;
    let patients = args.patients.unwrap_or_else(|| beside(&args.manifest, "patients.csv"));
    let events = args.events.unwrap_or_else(|| beside(&args.manifest, "events.csv"));
    let codes = args.codes.or_else(|| cfg.codes.clone()).unwrap_or_else(|| beside(&args.manifest, "codes.json"));

    let features = out.join("features.csv");
    info!("extracting features");
    extract::extract(&args.manifest, Some(cfg.target_spacing_mm), cfg.connectivity)?.save(&features)?;

    info!("labelling cohort");
    let cohort_csv = out.join("cohort.csv");
    cohort::write_cohort(&cohort::label(&patients, &events, &codes, cfg.label_rules())?).save(&cohort_csv)?;

    let matched_csv = out.join("cohort_matched.csv");
    let rows = cohort::read_cohort(&cohort_csv)?;
    cohort::write_cohort(&morphspan_core::cohort::match_cohort(&rows, cfg.bin_years)?).save(&matched_csv)?;

    info!("fitting models");
    let all: Vec<usize> = (0..FEATURE_NAMES.len()).collect();
    let fits = model::fit_gamlss(&matched_csv, &features, &all, &model::fit_config(cfg, None), &cfg.centile_levels)?;
    let fit_paths = model::save_fits(&out.join("fits"), &fits.fits)?;
    let centiles_csv = out.join("centiles.csv");
    fits.centiles.save(&centiles_csv)?;

    stats::fdr_from_fits(&fit_paths)?.save(out.join("pvalues.csv"))?;
    let boxstats_csv = out.join("boxstats.csv");
    stats::boxstats(&features, &cohort_csv, &all, true)?.save(&boxstats_csv)?;
    let trend_csv = out.join("trend.csv");
    stats::fit_poly(&features, &cohort_csv, 0, true, cfg.poly_degree, 1.0)?.save(&trend_csv)?;

    write_file(out.join("centiles.svg"), render(PlotKind::Centiles, &centiles_csv, None)?.as_bytes())?;
    write_file(out.join("boxstats.svg"), render(PlotKind::Boxstats, &boxstats_csv, None)?.as_bytes())?;
    write_file(out.join("trend.svg"), render(PlotKind::Trend, &trend_csv, None)?.as_bytes())?;
    Ok(())
}
