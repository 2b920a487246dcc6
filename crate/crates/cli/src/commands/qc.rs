use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::Args;
use morphspan_core::morphometrics::{bounding_box_face_ratios, connected_components, Connectivity};
use morphspan_core::qc::{
    bbox_outlier_flags, edge_touch_flag, fit_lifespan_polynomial, select_scan_per_session, QcFlags, ScanQcRecord,
    ORGANS,
};
use rayon::prelude::*;

use super::extract::load_canonical;
use crate::config::{connectivity, PipelineConfig};
use crate::error::{CliError, CliResult, Context};
use crate::table::{num, relative_to, write_file, CsvOut, Table};

#[derive(Debug, Args)]
pub struct QcFlagsArgs {
    /// CSV with session_id, scan_id, age_years and one mask path per organ
    /// (pancreas, liver, spleen, kidney_left, kidney_right).
    #[arg(long)]
    manifest: PathBuf,
    /// Structural and bounding-box flags.
    #[arg(short, long, default_value = "qc_flags.csv")]
    out: PathBuf,
    /// Organ volumes for `qc-select`.
    #[arg(long, default_value = "organ_volumes.csv")]
    volumes: PathBuf,
    #[arg(long)]
    z_threshold: Option<f64>,
    #[arg(long)]
    connectivity: Option<u8>,
}

#[derive(Debug, Args)]
pub struct QcSelectArgs {
    #[arg(long)]
    volumes: PathBuf,
    /// Flags from `qc-flags`; flagged scans are dropped before selection.
    #[arg(long)]
    flags: Option<PathBuf>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(short, long, default_value = "selected_scans.csv")]
    out: PathBuf,
    /// Also write the fitted lifespan polynomials as JSON.
    #[arg(long)]
    polynomials: Option<PathBuf>,
}

struct ScanMeasure {
    volumes: [f64; 5],
    n_components: usize,
    touches_edge: bool,
    ratios: [f64; 3],
}

fn measure(paths: &[PathBuf; 5], conn: Connectivity) -> CliResult<ScanMeasure> {
    let mut volumes = [0.0; 5];
    let mut n_components = 0;
    let mut touches_edge = false;
    let mut ratios = [0.0; 3];
    for (o, path) in paths.iter().enumerate() {
        let mask = load_canonical(path, None)?;
        volumes[o] = mask.count() as f64 * mask.voxel_volume_mm3();
        match ORGANS[o] {
            "pancreas" => {
                n_components = connected_components(&mask, conn).0;
                touches_edge = edge_touch_flag(&mask);
            }
            "liver" => ratios = bounding_box_face_ratios(&mask).context(path.display())?,
            _ => {}
        }
    }
    Ok(ScanMeasure { volumes, n_components, touches_edge, ratios })
}

pub const FLAG_HEADER: [&str; 8] = [
    "session_id",
    "scan_id",
    "multi_component",
    "touches_edge",
    "bbox_outlier",
    "liver_ratio_x_z",
    "liver_ratio_y_x",
    "liver_ratio_y_z",
];

pub fn volume_header() -> Vec<String> {
    let mut h = vec!["session_id".to_string(), "scan_id".into(), "age_years".into()];
    h.extend(ORGANS.iter().map(|o| format!("{o}_mm3")));
    h
}

pub fn qc_flags(manifest: &Path, z_threshold: f64, conn: u8) -> CliResult<(CsvOut, CsvOut)> {
    let conn = connectivity(conn)?;
    let t = Table::read(manifest)?;
    let (ses, scan, age) = (t.column("session_id")?, t.column("scan_id")?, t.column("age_years")?);
    let organ_cols = ORGANS.iter().map(|o| t.column(o)).collect::<CliResult<Vec<_>>>()?;
    let mut jobs = Vec::with_capacity(t.rows.len());
    for r in 0..t.rows.len() {
        let paths: [PathBuf; 5] = std::array::from_fn(|o| relative_to(manifest, t.get(r, organ_cols[o])));
        let age: f64 = t.parse(r, age)?;
        jobs.push((t.get(r, ses).to_owned(), t.get(r, scan).to_owned(), age, paths));
    }
    jobs.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    if let Some(w) = jobs.windows(2).find(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1) {
        return Err(CliError::validation(format!("scan {}/{} listed twice", w[0].0, w[0].1)));
    }
    let measured: Vec<CliResult<ScanMeasure>> =
        jobs.par_iter().map(|(_, scan, _, paths)| measure(paths, conn).context(format!("scan {scan}"))).collect();
    let measured = measured.into_iter().collect::<CliResult<Vec<_>>>()?;

    let ratios: Vec<[f64; 3]> = measured.iter().map(|m| m.ratios).collect();
    let outliers = bbox_outlier_flags(&ratios, z_threshold)?;

    let mut vols = CsvOut::new(&volume_header());
    let mut flags = CsvOut::new(&FLAG_HEADER);
    for ((job, m), outlier) in jobs.iter().zip(&measured).zip(outliers) {
        let mut row = vec![job.0.clone(), job.1.clone(), num(job.2)];
        row.extend(m.volumes.iter().map(|v| num(*v)));
        vols.row(&row);
        let f = QcFlags { multi_component: m.n_components > 1, touches_edge: m.touches_edge, bbox_outlier: outlier };
        flags.row(&[
            job.0.clone(),
            job.1.clone(),
            f.multi_component.to_string(),
            f.touches_edge.to_string(),
            f.bbox_outlier.to_string(),
            num(m.ratios[0]),
            num(m.ratios[1]),
            num(m.ratios[2]),
        ]);
    }
    Ok((vols, flags))
}

pub fn read_volumes(path: &Path) -> CliResult<Vec<ScanQcRecord>> {
    let t = Table::read(path)?;
    let header = volume_header();
    let cols = header.iter().map(|h| t.column(h)).collect::<CliResult<Vec<_>>>()?;
    let mut out = Vec::with_capacity(t.rows.len());
    for r in 0..t.rows.len() {
        let mut volumes = [0.0; 5];
        for o in 0..5 {
            volumes[o] = t.parse(r, cols[3 + o])?;
        }
        let rec = ScanQcRecord::new(t.get(r, cols[0]), t.get(r, cols[1]), t.parse(r, cols[2])?, volumes)
            .context(format!("{} row {}", path.display(), r + 1))?;
        out.push(rec);
    }
    Ok(out)
}

fn flagged_scans(path: &Path) -> CliResult<BTreeSet<(String, String)>> {
    let t = Table::read(path)?;
    let (ses, scan) = (t.column("session_id")?, t.column("scan_id")?);
    let cols = ["multi_component", "touches_edge", "bbox_outlier"]
        .iter()
        .map(|c| t.column(c))
        .collect::<CliResult<Vec<_>>>()?;
    let mut out = BTreeSet::new();
    for r in 0..t.rows.len() {
        let mut any = false;
        for &c in &cols {
            any |= t.parse::<bool>(r, c)?;
        }
        if any {
            out.insert((t.get(r, ses).to_owned(), t.get(r, scan).to_owned()));
        }
    }
    Ok(out)
}

pub fn qc_select(volumes: &Path, flags: Option<&Path>, degree: usize) -> CliResult<(CsvOut, String)> {
    let mut records = read_volumes(volumes)?;
    if let Some(f) = flags {
        let drop = flagged_scans(f)?;
        records.retain(|r| !drop.contains(&(r.session_id.clone(), r.scan_id.clone())));
    }
    if records.is_empty() {
        return Err(CliError::validation("no scans left after removing flagged ones"));
    }
    let polys = ORGANS
        .iter()
        .enumerate()
        .map(|(o, organ)| {
            let pts: Vec<(f64, f64)> = records.iter().map(|r| (r.age_years, r.volumes[o])).collect();
            fit_lifespan_polynomial(organ, &pts, degree)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let selected: BTreeMap<String, String> = select_scan_per_session(&records, &polys)?;
    let mut out = CsvOut::new(&["session_id", "scan_id"]);
    for (session, scan) in &selected {
        out.row(&[session, scan]);
    }
    let json = serde_json::to_string_pretty(&polys).expect("serializable") + "\n";
    Ok((out, json))
}

pub fn run_flags(args: QcFlagsArgs, cfg: &PipelineConfig) -> CliResult<()> {
    let (vols, flags) = qc_flags(
        &args.manifest,
        args.z_threshold.unwrap_or(cfg.z_threshold),
        args.connectivity.unwrap_or(cfg.connectivity),
    )?;
    vols.save(&args.volumes)?;
    flags.save(&args.out)
}

pub fn run_select(args: QcSelectArgs, cfg: &PipelineConfig) -> CliResult<()> {
    let degree = args.degree.unwrap_or(cfg.poly_degree);
    let (out, polys) = qc_select(&args.volumes, args.flags.as_deref(), degree)?;
    out.save(&args.out)?;
    if let Some(p) = &args.polynomials {
        write_file(p, polys.as_bytes())?;
    }
    Ok(())
}
