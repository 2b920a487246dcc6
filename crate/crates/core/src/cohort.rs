//! Diabetes labelling from coded events, exclusions and case-control matching.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Vocabulary {
    Icd,
    Phecode,
    Cpt,
    Prowas,
}

impl FromStr for Vocabulary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ICD" => Ok(Vocabulary::Icd),
            "PHECODE" => Ok(Vocabulary::Phecode),
            "CPT" => Ok(Vocabulary::Cpt),
            "PROWAS" => Ok(Vocabulary::Prowas),
            other => Err(Error::invalid(format!("unknown vocabulary {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub patient_id: String,
    pub date: NaiveDate,
    pub vocabulary: Vocabulary,
    pub code: String,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::M => "M",
            Sex::F => "F",
        }
    }
}

impl FromStr for Sex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "M" | "m" => Ok(Sex::M),
            "F" | "f" => Ok(Sex::F),
            other => Err(Error::invalid(format!("sex must be M or F, got {other:?}"))),
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Control,
    T2d,
    Excluded,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Control => "control",
            Group::T2d => "t2d",
            Group::Excluded => "excluded",
        }
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "control" => Ok(Group::Control),
            "t2d" => Ok(Group::T2d),
            "excluded" => Ok(Group::Excluded),
            other => Err(Error::invalid(format!("unknown group {other:?}"))),
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    CtContrast,
    CtNoncontrast,
    Mri,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::CtContrast => "ct_contrast",
            Modality::CtNoncontrast => "ct_noncontrast",
            Modality::Mri => "mri",
        }
    }

    pub fn is_ct(self) -> bool {
        matches!(self, Modality::CtContrast | Modality::CtNoncontrast)
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ct_contrast" => Ok(Modality::CtContrast),
            "ct_noncontrast" => Ok(Modality::CtNoncontrast),
            "mri" => Ok(Modality::Mri),
            other => Err(Error::invalid(format!("unknown modality {other:?}"))),
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Cancer,
    Sepsis,
    PancreasPathology,
    Trauma,
    T1dOrAmbiguous,
    A1cContradictsControl,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::Cancer => "cancer",
            ExclusionReason::Sepsis => "sepsis",
            ExclusionReason::PancreasPathology => "pancreas_pathology",
            ExclusionReason::Trauma => "trauma",
            ExclusionReason::T1dOrAmbiguous => "t1d_or_ambiguous",
            ExclusionReason::A1cContradictsControl => "a1c_contradicts_control",
        }
    }
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub patient_id: String,
    pub age_years: f64,
    pub sex: Sex,
    pub weight_kg: f64,
    pub group: Group,
    pub modality: Modality,
    pub scan_date: NaiveDate,
    pub exclusion_reason: Option<String>,
    /// Hemoglobin A1C, percent.
    pub a1c: Option<f64>,
}

impl CohortRow {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=120.0).contains(&self.age_years) {
            return Err(Error::invalid(format!("{}: age {} outside [0, 120]", self.patient_id, self.age_years)));
        }
        if !(self.weight_kg > 1.0 && self.weight_kg < 400.0) {
            return Err(Error::invalid(format!(
                "{}: weight {} kg outside (1, 400)",
                self.patient_id, self.weight_kg
            )));
        }
        let excluded = self.group == Group::Excluded;
        if excluded != self.exclusion_reason.is_some() {
            return Err(Error::invalid(format!(
                "{}: exclusion_reason must be present exactly when group is excluded",
                self.patient_id
            )));
        }
        Ok(())
    }
}

/// Code lists per condition. A pattern ending in `*` matches by prefix,
/// anything else must match the code exactly.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CodeSets {
    pub t2d: Vec<String>,
    pub t1d: Vec<String>,
    pub cancer: Vec<String>,
    pub sepsis: Vec<String>,
    pub trauma: Vec<String>,
    /// Diabetes codes that are neither type 1 nor type 2.
    #[serde(default)]
    pub other_diabetes: Vec<String>,
}

impl CodeSets {
    pub fn validate(&self) -> Result<()> {
        let t1d: BTreeSet<&str> = self.t1d.iter().map(String::as_str).collect();
        if let Some(shared) = self.t2d.iter().find(|c| t1d.contains(c.as_str())) {
            return Err(Error::invalid(format!("code {shared:?} listed as both t2d and t1d")));
        }
        Ok(())
    }
}

fn matches_any(code: &str, patterns: &[String]) -> bool {
    let code = code.trim();
    patterns.iter().any(|p| match p.strip_suffix('*') {
        Some(prefix) => code.starts_with(prefix),
        None => code == p,
    })
}

/// True for ICD or PHECODE events whose description contains "panc".
pub fn is_pancreas_pathology(event: &EventRecord) -> bool {
    matches!(event.vocabulary, Vocabulary::Icd | Vocabulary::Phecode)
        && event.description.to_lowercase().contains("panc")
}

/// Windows and thresholds of the labelling rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelRules {
    /// Events later than this many days after the scan are ignored.
    pub followup_days: i64,
    /// A trauma code this close to the scan (either side) excludes it.
    pub trauma_window_days: i64,
    /// Controls with A1C at or above this percentage are excluded.
    pub a1c_threshold: f64,
}

impl Default for LabelRules {
    fn default() -> Self {
        Self {
            followup_days: 365,
            trauma_window_days: 30,
            a1c_threshold: 6.5,
        }
    }
}

/// Labels one patient from their events, with the default rules.
pub fn assign_label(
    events: &[EventRecord],
    scan_date: NaiveDate,
    codes: &CodeSets,
    a1c: Option<f64>,
) -> (Group, Option<ExclusionReason>) {
    assign_label_with(events, scan_date, codes, a1c, &LabelRules::default())
}

pub fn assign_label_with(
    events: &[EventRecord],
    scan_date: NaiveDate,
    codes: &CodeSets,
    a1c: Option<f64>,
    rules: &LabelRules,
) -> (Group, Option<ExclusionReason>) {
    let in_window = |e: &&EventRecord| (e.date - scan_date).num_days() <= rules.followup_days;
    let visible: Vec<&EventRecord> = events.iter().filter(in_window).collect();

    let exclusions = [
        (ExclusionReason::Cancer, visible.iter().any(|e| matches_any(&e.code, &codes.cancer))),
        (ExclusionReason::Sepsis, visible.iter().any(|e| matches_any(&e.code, &codes.sepsis))),
        (
            ExclusionReason::PancreasPathology,
            visible.iter().any(|e| is_pancreas_pathology(e)),
        ),
        (
            ExclusionReason::Trauma,
            visible.iter().any(|e| {
                (e.date - scan_date).num_days().abs() <= rules.trauma_window_days
                    && matches_any(&e.code, &codes.trauma)
            }),
        ),
    ];
    if let Some((reason, _)) = exclusions.iter().find(|(_, hit)| *hit) {
        return (Group::Excluded, Some(*reason));
    }

    let t2d = visible.iter().filter(|e| matches_any(&e.code, &codes.t2d)).count();
    let t1d = visible.iter().filter(|e| matches_any(&e.code, &codes.t1d)).count();
    let other = visible.iter().filter(|e| matches_any(&e.code, &codes.other_diabetes)).count();

    if t2d >= 1 && t1d == 0 {
        return (Group::T2d, None);
    }
    if t2d + t1d + other > 0 {
        return (Group::Excluded, Some(ExclusionReason::T1dOrAmbiguous));
    }
    match a1c {
        Some(v) if v >= rules.a1c_threshold => (Group::Excluded, Some(ExclusionReason::A1cContradictsControl)),
        _ => (Group::Control, None),
    }
}

/// Age bin index used for matching.
pub fn age_bin(age_years: f64, bin_years: u32) -> i64 {
    (age_years / bin_years as f64).floor() as i64
}

/// Pairs each t2d row with a control of the same sex and age bin.
///
/// Within a cell, t2d patients are taken in ascending `patient_id` and each
/// takes the unmatched control nearest in age (ties: smallest
/// `patient_id`). Returns `(t2d_index, control_index)` into `rows`, sorted
/// by the t2d patient id.
pub fn match_pairs(rows: &[CohortRow], bin_years: u32) -> Result<Vec<(usize, usize)>> {
    if bin_years == 0 {
        return Err(Error::invalid("matching bin width must be at least 1 year"));
    }
    let mut seen = BTreeSet::new();
    for r in rows.iter().filter(|r| r.group != Group::Excluded) {
        if !seen.insert(r.patient_id.as_str()) {
            return Err(Error::invalid(format!("duplicate patient_id {:?}", r.patient_id)));
        }
    }

    type Cell = (Sex, i64);
    let mut cells: BTreeMap<Cell, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        let cell = cells.entry((r.sex, age_bin(r.age_years, bin_years))).or_default();
        match r.group {
            Group::T2d => cell.0.push(i),
            Group::Control => cell.1.push(i),
            Group::Excluded => {}
        }
    }

    let mut pairs = Vec::new();
    for (_, (mut cases, mut controls)) in cells {
        cases.sort_by(|&a, &b| rows[a].patient_id.cmp(&rows[b].patient_id));
        controls.sort_by(|&a, &b| rows[a].patient_id.cmp(&rows[b].patient_id));
        let mut taken = vec![false; controls.len()];
        for &case in &cases {
            let age = rows[case].age_years;
            let best = controls
                .iter()
                .enumerate()
                .filter(|(slot, _)| !taken[*slot])
                .min_by(|(_, &a), (_, &b)| {
                    let da = (rows[a].age_years - age).abs();
                    let db = (rows[b].age_years - age).abs();
                    da.total_cmp(&db)
                });
            if let Some((slot, &control)) = best {
                taken[slot] = true;
                pairs.push((case, control));
            }
        }
    }
    pairs.sort_by(|a, b| rows[a.0].patient_id.cmp(&rows[b.0].patient_id));
    Ok(pairs)
}

/// Matched subset: every paired t2d row and its control, ordered by
/// `patient_id`.
pub fn match_cohort(rows: &[CohortRow], bin_years: u32) -> Result<Vec<CohortRow>> {
    let pairs = match_pairs(rows, bin_years)?;
    if pairs.is_empty() {
        warn!("matching produced an empty cohort");
    }
    let mut out: Vec<CohortRow> = pairs
        .iter()
        .flat_map(|&(a, b)| [rows[a].clone(), rows[b].clone()])
        .collect();
    out.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    Ok(out)
}

/// Organ volume per kilogram of body weight, in mm³/kg.
pub fn volume_index(volume_mm3: f64, weight_kg: f64) -> Result<f64> {
    if !(weight_kg > 0.0) || !weight_kg.is_finite() {
        return Err(Error::invalid(format!("weight must be positive, got {weight_kg}")));
    }
    Ok(volume_mm3 / weight_kg)
}
