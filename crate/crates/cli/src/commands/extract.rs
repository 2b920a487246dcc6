use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::Args;
use morphspan_core::morphometrics::{analyze_mask, MaskReport, FEATURE_NAMES};
use morphspan_core::volume::{canonicalize_las, read_mask, resample_isotropic, VoxelMask};
use rayon::prelude::*;

use crate::config::{connectivity, PipelineConfig};
use crate::error::{CliError, CliResult, Context};
use crate::table::{num, relative_to, CsvOut, Table};

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// CSV with scan_id, patient_id, path (paths relative to the manifest).
    #[arg(long)]
    manifest: PathBuf,
    #[arg(short, long, default_value = "features.csv")]
    out: PathBuf,
    /// Isotropic spacing the masks are resampled to before measuring.
    #[arg(long)]
    target_spacing: Option<f64>,
    /// Measure at native spacing.
    #[arg(long)]
    native: bool,
    #[arg(long)]
    connectivity: Option<u8>,
}

pub struct ManifestEntry {
    pub scan_id: String,
    pub patient_id: String,
    pub path: PathBuf,
}

pub fn read_manifest(path: &Path) -> CliResult<Vec<ManifestEntry>> {
    let t = Table::read(path)?;
    let (s, p, f) = (t.column("scan_id")?, t.column("patient_id")?, t.column("path")?);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(t.rows.len());
    for r in 0..t.rows.len() {
        let scan_id = t.get(r, s).to_owned();
        if scan_id.is_empty() || !seen.insert(scan_id.clone()) {
            return Err(CliError::validation(format!(
                "{}: row {}: scan_id {scan_id:?} is empty or repeated",
                path.display(),
                r + 1
            )));
        }
        out.push(ManifestEntry { scan_id, patient_id: t.get(r, p).to_owned(), path: relative_to(path, t.get(r, f)) });
    }
    out.sort_by(|a, b| a.scan_id.cmp(&b.scan_id));
    Ok(out)
}

/// Reads a mask, puts it in LAS order and optionally resamples it.
pub fn load_canonical(path: &Path, target_spacing: Option<f64>) -> CliResult<VoxelMask> {
    let mask = read_mask(path).context(path.display())?;
    let las = canonicalize_las(&mask).context(path.display())?;
    match target_spacing {
        Some(t) if las.spacing().iter().any(|s| (s - t).abs() > 1e-9 * t) => {
            resample_isotropic(&las, t).context(path.display())
        }
        _ => Ok(las),
    }
}

pub const EXTRA_COLUMNS: [&str; 3] = ["voxel_volume_mm3", "n_components", "touches_edge"];

pub fn header() -> Vec<&'static str> {
    let mut h = vec!["scan_id", "patient_id"];
    h.extend(FEATURE_NAMES);
    h.extend(EXTRA_COLUMNS);
    h
}

pub fn extract(manifest: &Path, target_spacing: Option<f64>, conn: u8) -> CliResult<CsvOut> {
    let conn = connectivity(conn)?;
    let entries = read_manifest(manifest)?;
    let reports: Vec<CliResult<MaskReport>> = entries
        .par_iter()
        .map(|e| {
            let mask = load_canonical(&e.path, target_spacing)?;
            analyze_mask(&mask, conn).context(format!("scan {}", e.scan_id))
        })
        .collect();
    let mut out = CsvOut::new(&header());
    for (e, rep) in entries.iter().zip(reports) {
        let rep = rep?;
        let mut row = vec![e.scan_id.clone(), e.patient_id.clone()];
        row.extend(rep.features.values().iter().map(|v| num(*v)));
        row.push(num(rep.voxel_volume_mm3));
        row.push(rep.n_components.to_string());
        row.push(rep.touches_edge.to_string());
        out.row(&row);
    }
    Ok(out)
}

pub fn run(args: ExtractArgs, cfg: &PipelineConfig) -> CliResult<()> {
    let target = if args.native { None } else { Some(args.target_spacing.unwrap_or(cfg.target_spacing_mm)) };
    if let Some(t) = target {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::validation(format!("target spacing {t} must be positive")));
        }
    }
    extract(&args.manifest, target, args.connectivity.unwrap_or(cfg.connectivity))?.save(&args.out)
}
