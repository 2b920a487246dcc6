use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::Args;
use log::warn;
use morphspan_core::cohort::{
    assign_label_with, match_cohort, CodeSets, CohortRow, EventRecord, LabelRules, Modality, Sex, Vocabulary,
};
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult, Context};
use crate::table::{num, opt_num, CsvOut, Table};

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// CSV with patient_id, age_years, sex, weight_kg, modality, scan_date and optional a1c.
    #[arg(long)]
    patients: PathBuf,
    /// CSV with patient_id, date, vocabulary, code, description.
    #[arg(long)]
    events: PathBuf,
    /// JSON code lists (t2d, t1d, cancer, sepsis, trauma, other_diabetes).
    #[arg(long)]
    codes: Option<PathBuf>,
    #[arg(short, long, default_value = "cohort.csv")]
    out: PathBuf,
    #[arg(long)]
    followup_days: Option<i64>,
    #[arg(long)]
    trauma_window_days: Option<i64>,
    #[arg(long)]
    a1c_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[arg(long)]
    cohort: PathBuf,
    #[arg(long)]
    bin_years: Option<u32>,
    #[arg(short, long, default_value = "cohort_matched.csv")]
    out: PathBuf,
}

pub const COHORT_HEADER: [&str; 9] =
    ["patient_id", "age_years", "sex", "weight_kg", "group", "modality", "scan_date", "exclusion_reason", "a1c"];

fn date(t: &Table, r: usize, c: usize) -> CliResult<NaiveDate> {
    NaiveDate::parse_from_str(t.get(r, c), "%Y-%m-%d").map_err(|e| {
        CliError::validation(format!(
            "{}: row {}, column `{}`: bad date {:?}: {e}",
            t.path.display(),
            r + 1,
            t.headers[c],
            t.get(r, c)
        ))
    })
}

pub fn read_codes(path: &Path) -> CliResult<CodeSets> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let codes: CodeSets =
        serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    codes.validate().context(path.display())?;
    Ok(codes)
}

fn read_events(path: &Path) -> CliResult<BTreeMap<String, Vec<EventRecord>>> {
    let t = Table::read(path)?;
    let cols = ["patient_id", "date", "vocabulary", "code", "description"]
        .iter()
        .map(|c| t.column(c))
        .collect::<CliResult<Vec<_>>>()?;
    let mut by_patient: BTreeMap<String, Vec<EventRecord>> = BTreeMap::new();
    for r in 0..t.rows.len() {
        let e = EventRecord {
            patient_id: t.get(r, cols[0]).to_owned(),
            date: date(&t, r, cols[1])?,
            vocabulary: t.parse::<Vocabulary>(r, cols[2])?,
            code: t.get(r, cols[3]).to_owned(),
            description: t.get(r, cols[4]).to_owned(),
        };
        by_patient.entry(e.patient_id.clone()).or_default().push(e);
    }
    Ok(by_patient)
}

struct Patient {
    patient_id: String,
    age_years: f64,
    sex: Sex,
    weight_kg: f64,
    modality: Modality,
    scan_date: NaiveDate,
    a1c: Option<f64>,
}

fn read_patients(path: &Path) -> CliResult<Vec<Patient>> {
    let t = Table::read(path)?;
    let cols = ["patient_id", "age_years", "sex", "weight_kg", "modality", "scan_date"]
        .iter()
        .map(|c| t.column(c))
        .collect::<CliResult<Vec<_>>>()?;
    let a1c = t.has("a1c").then(|| t.column("a1c")).transpose()?;
    let mut out = Vec::with_capacity(t.rows.len());
    for r in 0..t.rows.len() {
        out.push(Patient {
            patient_id: t.get(r, cols[0]).to_owned(),
            age_years: t.parse(r, cols[1])?,
            sex: t.parse(r, cols[2])?,
            weight_kg: t.parse(r, cols[3])?,
            modality: t.parse(r, cols[4])?,
            scan_date: date(&t, r, cols[5])?,
            a1c: a1c.map(|c| t.parse_opt(r, c)).transpose()?.flatten(),
        });
    }
    out.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    if let Some(w) = out.windows(2).find(|w| w[0].patient_id == w[1].patient_id) {
        return Err(CliError::validation(format!("{}: patient {} listed twice", path.display(), w[0].patient_id)));
    }
    Ok(out)
}

pub fn write_cohort(rows: &[CohortRow]) -> CsvOut {
    let mut out = CsvOut::new(&COHORT_HEADER);
    for r in rows {
        out.row(&[
            r.patient_id.clone(),
            num(r.age_years),
            r.sex.to_string(),
            num(r.weight_kg),
            r.group.to_string(),
            r.modality.to_string(),
            r.scan_date.format("%Y-%m-%d").to_string(),
            r.exclusion_reason.clone().unwrap_or_default(),
            opt_num(r.a1c),
        ]);
    }
    out
}

pub fn read_cohort(path: &Path) -> CliResult<Vec<CohortRow>> {
    let t = Table::read(path)?;
    let cols = COHORT_HEADER.iter().map(|c| t.column(c)).collect::<CliResult<Vec<_>>>()?;
    let mut out = Vec::with_capacity(t.rows.len());
    for r in 0..t.rows.len() {
        let reason = t.get(r, cols[7]);
        let row = CohortRow {
            patient_id: t.get(r, cols[0]).to_owned(),
            age_years: t.parse(r, cols[1])?,
            sex: t.parse(r, cols[2])?,
            weight_kg: t.parse(r, cols[3])?,
            group: t.parse(r, cols[4])?,
            modality: t.parse(r, cols[5])?,
            scan_date: date(&t, r, cols[6])?,
            exclusion_reason: (!reason.is_empty()).then(|| reason.to_owned()),
            a1c: t.parse_opt(r, cols[8])?,
        };
        row.validate().context(path.display())?;
        out.push(row);
    }
    Ok(out)
}

pub fn label(patients: &Path, events: &Path, codes: &Path, rules: LabelRules) -> CliResult<Vec<CohortRow>> {
    let codes = read_codes(codes)?;
    let patients = read_patients(patients)?;
    let events = read_events(events)?;
    let unknown = events.keys().filter(|id| patients.binary_search_by(|p| p.patient_id.cmp(id)).is_err()).count();
    if unknown > 0 {
        warn!("{unknown} patient(s) in the event file have no patient row; their events are ignored");
    }
    let rows: Vec<CohortRow> = patients
        .par_iter()
        .map(|p| {
            let evs = events.get(&p.patient_id).map(Vec::as_slice).unwrap_or(&[]);
            let (group, reason) = assign_label_with(evs, p.scan_date, &codes, p.a1c, &rules);
            CohortRow {
                patient_id: p.patient_id.clone(),
                age_years: p.age_years,
                sex: p.sex,
                weight_kg: p.weight_kg,
                group,
                modality: p.modality,
                scan_date: p.scan_date,
                exclusion_reason: reason.map(|r| r.to_string()),
                a1c: p.a1c,
            }
        })
        .collect();
    for r in &rows {
        r.validate()?;
    }
    Ok(rows)
}

pub fn codes_path(flag: Option<PathBuf>, cfg: &PipelineConfig) -> CliResult<PathBuf> {
    flag.or_else(|| cfg.codes.clone())
        .ok_or_else(|| CliError::validation("no code sets given (use --codes or the config `codes` entry)"))
}

pub fn run_label(args: LabelArgs, cfg: &PipelineConfig) -> CliResult<()> {
    let mut cfg = cfg.clone();
    cfg.followup_days = args.followup_days.unwrap_or(cfg.followup_days);
    cfg.trauma_window_days = args.trauma_window_days.unwrap_or(cfg.trauma_window_days);
    cfg.a1c_threshold = args.a1c_threshold.unwrap_or(cfg.a1c_threshold);
    cfg.validate()?;
    let codes = codes_path(args.codes, &cfg)?;
    let rows = label(&args.patients, &args.events, &codes, cfg.label_rules())?;
    write_cohort(&rows).save(&args.out)
}

pub fn run_match(args: MatchArgs, cfg: &PipelineConfig) -> CliResult<()> {
    let bin = args.bin_years.unwrap_or(cfg.bin_years);
    if bin == 0 {
        return Err(CliError::validation("--bin-years must be at least 1"));
    }
    let rows = read_cohort(&args.cohort)?;
    write_cohort(&match_cohort(&rows, bin)?).save(&args.out)
}
