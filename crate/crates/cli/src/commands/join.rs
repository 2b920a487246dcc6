//! Joining per-scan features onto cohort rows.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use morphspan_core::cohort::{CohortRow, Group};
use morphspan_core::morphometrics::FEATURE_NAMES;

use crate::error::{CliError, CliResult};
use crate::table::Table;

pub struct Subject {
    pub row: CohortRow,
    pub features: [f64; 13],
}

/// patient_id → feature values; a patient may appear only once.
pub fn read_features(path: &Path) -> CliResult<BTreeMap<String, [f64; 13]>> {
    let t = Table::read(path)?;
    let pid = t.column("patient_id")?;
    let cols = FEATURE_NAMES.iter().map(|f| t.column(f)).collect::<CliResult<Vec<_>>>()?;
    let mut out = BTreeMap::new();
    for r in 0..t.rows.len() {
        let mut v = [0.0; 13];
        for (k, &c) in cols.iter().enumerate() {
            v[k] = t.parse(r, c)?;
        }
        let id = t.get(r, pid).to_owned();
        if out.insert(id.clone(), v).is_some() {
            return Err(CliError::validation(format!(
                "{}: patient {id} has more than one scan; run qc-select first",
                path.display()
            )));
        }
    }
    Ok(out)
}

/// Non-excluded cohort rows that have features, in cohort order.
pub fn join(cohort: Vec<CohortRow>, features: &BTreeMap<String, [f64; 13]>) -> Vec<Subject> {
    let mut missing = 0usize;
    let out: Vec<Subject> = cohort
        .into_iter()
        .filter(|r| r.group != Group::Excluded)
        .filter_map(|row| match features.get(&row.patient_id) {
            Some(f) => Some(Subject { features: *f, row }),
            None => {
                missing += 1;
                None
            }
        })
        .collect();
    if missing > 0 {
        warn!("{missing} cohort patient(s) have no feature row and are left out");
    }
    out
}

/// Index of a feature name, or a validation error listing the valid names.
pub fn feature_index(name: &str) -> CliResult<usize> {
    FEATURE_NAMES.iter().position(|f| *f == name).ok_or_else(|| {
        CliError::validation(format!("unknown feature `{name}`; expected one of {}", FEATURE_NAMES.join(", ")))
    })
}

pub fn selected_features(names: &[String]) -> CliResult<Vec<usize>> {
    if names.is_empty() {
        Ok((0..FEATURE_NAMES.len()).collect())
    } else {
        names.iter().map(|n| feature_index(n)).collect()
    }
}
