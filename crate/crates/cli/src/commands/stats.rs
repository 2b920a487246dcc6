use std::path::{Path, PathBuf};

use clap::Args;
use log::warn;
use morphspan_core::cohort::{volume_index, Modality};
use morphspan_core::gamlss::{wald_p, GamlssFit};
use morphspan_core::morphometrics::FEATURE_NAMES;
use morphspan_core::stats::{box_stats, pvalue_table, trend_with_band};

use super::cohort::read_cohort;
use super::join::{feature_index, join, read_features, selected_features};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult, Context};
use crate::table::{num, opt_num, CsvOut, Table};

#[derive(Debug, Args)]
pub struct BoxstatsArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    cohort: PathBuf,
    /// Feature column(s) to summarize; all thirteen by default.
    #[arg(long = "feature")]
    feature: Vec<String>,
    /// One group per sex instead of per sex and decade.
    #[arg(long)]
    no_decades: bool,
    #[arg(short, long, default_value = "boxstats.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitPolyArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    cohort: PathBuf,
    #[arg(long, default_value = "volume_mm3")]
    feature: String,
    /// Use the raw feature instead of dividing by body weight.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    degree: Option<usize>,
    /// Age grid step in years.
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    #[arg(short, long, default_value = "trend.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FdrArgs {
    /// CSV with a feature column and p values (p_raw, p or p_value), or
    /// coefficient and se columns from which Wald p values are computed.
    #[arg(long = "in", conflicts_with = "fits")]
    input: Option<PathBuf>,
    /// Fit JSON files from `fit-gamlss`; the diabetes term of μ is tested.
    #[arg(long, num_args = 1..)]
    fits: Vec<PathBuf>,
    #[arg(short, long, default_value = "pvalues.csv")]
    out: PathBuf,
}

pub const BOX_HEADER: [&str; 10] =
    ["feature", "sex", "age_group", "n", "median", "q1", "q3", "whisker_low", "whisker_high", "outliers"];

pub fn boxstats(features: &Path, cohort: &Path, which: &[usize], decades: bool) -> CliResult<CsvOut> {
    let subjects = join(read_cohort(cohort)?, &read_features(features)?);
    if subjects.is_empty() {
        return Err(CliError::validation("no cohort patient has features"));
    }
    let mut out = CsvOut::new(&BOX_HEADER);
    for &f in which {
        let values: Vec<_> = subjects.iter().map(|s| (s.row.sex, s.row.age_years, s.features[f])).collect();
        for b in box_stats(&values, decades).context(FEATURE_NAMES[f])? {
            let outliers: Vec<String> = b.outliers.iter().map(|v| num(*v)).collect();
            out.row(&[
                FEATURE_NAMES[f].to_string(),
                b.sex.to_string(),
                b.age_group.clone(),
                b.n.to_string(),
                num(b.median),
                num(b.q1),
                num(b.q3),
                num(b.whisker_low),
                num(b.whisker_high),
                outliers.join(";"),
            ]);
        }
    }
    Ok(out)
}

pub const TREND_HEADER: [&str; 5] = ["group", "age_years", "fit", "lower", "upper"];

pub fn fit_poly(features: &Path, cohort: &Path, feature: usize, per_weight: bool, degree: usize, step: f64) -> CliResult<CsvOut> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(CliError::validation("--step must be positive"));
    }
    let subjects = join(read_cohort(cohort)?, &read_features(features)?);
    let mut out = CsvOut::new(&TREND_HEADER);
    for modality in [Modality::CtContrast, Modality::CtNoncontrast, Modality::Mri] {
        let mut pts = Vec::new();
        for s in subjects.iter().filter(|s| s.row.modality == modality) {
            let x = s.features[feature];
            let y = if per_weight { volume_index(x, s.row.weight_kg)? } else { x };
            pts.push((s.row.age_years, y));
        }
        if pts.len() < degree + 2 {
            warn!("{modality}: {} point(s) are too few for a degree-{degree} trend; skipped", pts.len());
            continue;
        }
        let lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).ceil();
        let hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let n = ((hi - lo) / step).floor().max(0.0) as usize;
        let grid: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
        let band = trend_with_band(&pts, degree, &grid).context(modality)?;
        for i in 0..grid.len() {
            out.row(&[modality.to_string(), num(grid[i]), num(band.fit[i]), num(band.lower[i]), num(band.upper[i])]);
        }
    }
    Ok(out)
}

type PRow = (String, Option<f64>, Option<f64>, f64);

fn rows_from_csv(path: &Path) -> CliResult<Vec<PRow>> {
    let t = Table::read(path)?;
    let feature = t.column("feature")?;
    let p_col = ["p_raw", "p", "p_value"].iter().find(|c| t.has(c)).map(|c| t.column(c)).transpose()?;
    let coef = t.has("coefficient").then(|| t.column("coefficient")).transpose()?;
    let se = t.has("se").then(|| t.column("se")).transpose()?;
    if p_col.is_none() && (coef.is_none() || se.is_none()) {
        return Err(CliError::validation(format!(
            "{}: missing column `p_raw` (or `coefficient` and `se` to compute it)",
            path.display()
        )));
    }
    let mut out = Vec::with_capacity(t.rows.len());
    for r in 0..t.rows.len() {
        let c = coef.map(|c| t.parse_opt::<f64>(r, c)).transpose()?.flatten();
        let s = se.map(|c| t.parse_opt::<f64>(r, c)).transpose()?.flatten();
        let p = match (p_col, c, s) {
            (Some(pc), _, _) => t.parse(r, pc)?,
            (None, Some(c), Some(s)) => wald_p(c, s).context(format!("{} row {}", path.display(), r + 1))?,
            _ => {
                return Err(CliError::validation(format!(
                    "{}: row {}: needs both coefficient and se",
                    path.display(),
                    r + 1
                )))
            }
        };
        out.push((t.get(r, feature).to_owned(), c, s, p));
    }
    Ok(out)
}

pub fn read_fit(path: &Path) -> CliResult<GamlssFit> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn rows_from_fits(paths: &[PathBuf]) -> CliResult<Vec<PRow>> {
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let f = read_fit(p)?;
        let (c, s) = (f.mu.beta_diabetes, f.mu.se.beta_diabetes);
        let feature = if f.feature.is_empty() { p.display().to_string() } else { f.feature.clone() };
        out.push((feature, Some(c), Some(s), wald_p(c, s).context(p.display())?));
    }
    Ok(out)
}

pub const P_HEADER: [&str; 6] = ["feature", "coefficient", "se", "p_raw", "p_adjusted", "significant"];

pub fn fdr_table(rows: &[PRow]) -> CliResult<CsvOut> {
    let table = pvalue_table(rows)?;
    let mut out = CsvOut::new(&P_HEADER);
    for r in table {
        out.row(&[
            r.feature,
            opt_num(r.coefficient),
            opt_num(r.se),
            num(r.p_raw),
            num(r.p_adjusted),
            r.significant.to_string(),
        ]);
    }
    Ok(out)
}

pub fn fdr_from_fits(paths: &[PathBuf]) -> CliResult<CsvOut> {
    fdr_table(&rows_from_fits(paths)?)
}

pub fn run_boxstats(args: BoxstatsArgs) -> CliResult<()> {
    let which = selected_features(&args.feature)?;
    boxstats(&args.features, &args.cohort, &which, !args.no_decades)?.save(&args.out)
}

pub fn run_fit_poly(args: FitPolyArgs, cfg: &PipelineConfig) -> CliResult<()> {
    let degree = args.degree.unwrap_or(cfg.poly_degree);
    let f = feature_index(&args.feature)?;
    fit_poly(&args.features, &args.cohort, f, !args.raw, degree, args.step)?.save(&args.out)
}

pub fn run_fdr(args: FdrArgs) -> CliResult<()> {
    let rows = match (&args.input, args.fits.is_empty()) {
        (Some(p), _) => rows_from_csv(p)?,
        (None, false) => rows_from_fits(&args.fits)?,
        (None, true) => return Err(CliError::validation("fdr needs --in or --fits")),
    };
    fdr_table(&rows)?.save(&args.out)
}
