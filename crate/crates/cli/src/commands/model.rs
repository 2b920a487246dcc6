use std::path::{Path, PathBuf};

use clap::Args;
use morphspan_core::cohort::{Group, Sex};
use morphspan_core::gamlss::{centiles, fit, CentileCurve, CovariateSetting, FitConfig, GamlssFit, Observation};
use morphspan_core::morphometrics::FEATURE_NAMES;
use rayon::prelude::*;

use super::cohort::read_cohort;
use super::join::{join, read_features, selected_features, Subject};
use super::stats::read_fit;
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult, Context};
use crate::table::{num, write_file, CsvOut};

#[derive(Debug, Args)]
pub struct FitGamlssArgs {
    #[arg(long)]
    cohort: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Feature(s) to model; all thirteen by default.
    #[arg(long = "feature")]
    feature: Vec<String>,
    /// Directory receiving one `<feature>.fit.json` per feature.
    #[arg(long, default_value = "fits")]
    out_dir: PathBuf,
    #[arg(long, default_value = "centiles.csv")]
    centiles: PathBuf,
    #[arg(long)]
    edf: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CentilesArgs {
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    sex: Sex,
    /// 1 for type 2 diabetes, 0 for control.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
    diabetes: u8,
    #[arg(long)]
    weight: f64,
    /// Ages to evaluate; whole years across the fitted range by default.
    #[arg(long, value_delimiter = ',')]
    ages: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    #[arg(short, long, default_value = "centiles.csv")]
    out: PathBuf,
}

/// Sex is coded M = 1, F = 0; diabetes is 1 for the t2d group.
pub fn sex_code(s: Sex) -> f64 {
    match s {
        Sex::M => 1.0,
        Sex::F => 0.0,
    }
}

pub fn observations(subjects: &[Subject], feature: usize) -> Vec<Observation> {
    subjects
        .iter()
        .map(|s| Observation {
            age: s.row.age_years,
            diabetes: if s.row.group == Group::T2d { 1.0 } else { 0.0 },
            sex: sex_code(s.row.sex),
            weight: s.row.weight_kg,
            y: s.features[feature],
        })
        .collect()
}

pub fn centile_header(levels: &[f64]) -> Vec<String> {
    let mut h: Vec<String> =
        ["feature", "sex", "diabetes", "weight_kg", "age_years"].iter().map(|s| s.to_string()).collect();
    h.extend(levels.iter().map(|l| format!("p{l}")));
    h
}

fn push_curve(out: &mut CsvOut, c: &CentileCurve, sex: Sex) {
    for (age, row) in c.ages.iter().zip(&c.values) {
        let mut fields = vec![
            c.feature.clone(),
            sex.to_string(),
            num(c.setting.diabetes),
            num(c.setting.weight_kg),
            num(*age),
        ];
        fields.extend(row.iter().map(|v| num(*v)));
        out.row(&fields);
    }
}

/// Whole-year ages inside the fitted spline domain.
pub fn default_ages(f: &GamlssFit) -> Vec<f64> {
    let [lo, hi] = f.mu.spline.domain;
    let (a, b) = (lo.ceil() as i64, hi.floor() as i64);
    (a..=b).map(|x| x as f64).collect()
}

pub struct ModelOutputs {
    pub fits: Vec<(String, String)>,
    pub centiles: CsvOut,
}

pub fn fit_config(cfg: &PipelineConfig, max_iterations: Option<usize>) -> FitConfig {
    let mut fc = FitConfig { target_edf: cfg.spline_edf, ..FitConfig::default() };
    if let Some(m) = max_iterations {
        fc.max_iterations = m;
    }
    fc
}

pub fn fit_gamlss(
    cohort: &Path,
    features: &Path,
    which: &[usize],
    config: &FitConfig,
    levels: &[f64],
) -> CliResult<ModelOutputs> {
    let subjects = join(read_cohort(cohort)?, &read_features(features)?);
    let fits: Vec<CliResult<GamlssFit>> = which
        .par_iter()
        .map(|&f| {
            let obs = observations(&subjects, f);
            let mut g = fit(&obs, config).context(format!("feature {}", FEATURE_NAMES[f]))?;
            g.feature = FEATURE_NAMES[f].to_string();
            Ok(g)
        })
        .collect();
    let fits = fits.into_iter().collect::<CliResult<Vec<_>>>()?;

    let mean_weight = |sex: Sex| {
        let w: Vec<f64> = subjects.iter().filter(|s| s.row.sex == sex).map(|s| s.row.weight_kg).collect();
        (!w.is_empty()).then(|| w.iter().sum::<f64>() / w.len() as f64)
    };
    let mut table = CsvOut::new(&centile_header(levels));
    let mut files = Vec::with_capacity(fits.len());
    for g in &fits {
        let ages = default_ages(g);
        for sex in [Sex::M, Sex::F] {
            let Some(weight_kg) = mean_weight(sex) else { continue };
            for diabetes in [0.0, 1.0] {
                let setting = CovariateSetting { sex: sex_code(sex), diabetes, weight_kg };
                let c = centiles(g, setting, &ages, levels).context(format!("feature {}", g.feature))?;
                push_curve(&mut table, &c, sex);
            }
        }
        let json = serde_json::to_string_pretty(g).expect("serializable") + "\n";
        files.push((format!("{}.fit.json", g.feature), json));
    }
    Ok(ModelOutputs { fits: files, centiles: table })
}

pub fn save_fits(dir: &Path, fits: &[(String, String)]) -> CliResult<Vec<PathBuf>> {
    let mut paths = Vec::with_capacity(fits.len());
    for (name, json) in fits {
        let p = dir.join(name);
        write_file(&p, json.as_bytes())?;
        paths.push(p);
    }
    Ok(paths)
}

fn levels_or(levels: Option<Vec<f64>>, cfg: &PipelineConfig) -> CliResult<Vec<f64>> {
    let mut c = cfg.clone();
    if let Some(l) = levels {
        c.centile_levels = l;
    }
    c.validate()?;
    Ok(c.centile_levels)
}

pub fn run_fit(args: FitGamlssArgs, cfg: &PipelineConfig) -> CliResult<()> {
    let mut cfg = cfg.clone();
    if let Some(e) = args.edf {
        cfg.spline_edf = e;
    }
    let levels = levels_or(args.levels, &cfg)?;
    let which = selected_features(&args.feature)?;
    let out = fit_gamlss(&args.cohort, &args.features, &which, &fit_config(&cfg, args.max_iterations), &levels)?;
    save_fits(&args.out_dir, &out.fits)?;
    out.centiles.save(&args.centiles)
}

pub fn run_centiles(args: CentilesArgs, cfg: &PipelineConfig) -> CliResult<()> {
    let levels = levels_or(args.levels, cfg)?;
    let g = read_fit(&args.fit)?;
    if !(args.weight > 1.0 && args.weight < 400.0) {
        return Err(CliError::validation(format!("weight {} kg outside (1, 400)", args.weight)));
    }
    let ages = args.ages.unwrap_or_else(|| default_ages(&g));
    let setting = CovariateSetting { sex: sex_code(args.sex), diabetes: args.diabetes as f64, weight_kg: args.weight };
    let c = centiles(&g, setting, &ages, &levels)?;
    let mut out = CsvOut::new(&centile_header(&levels));
    push_curve(&mut out, &c, args.sex);
    out.save(&args.out)
}
