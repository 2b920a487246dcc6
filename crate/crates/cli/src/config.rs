use std::fs;
use std::path::{Path, PathBuf};

use morphspan_core::cohort::LabelRules;
use morphspan_core::morphometrics::Connectivity;
use morphspan_core::qc::DEFAULT_Z_THRESHOLD;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Settings shared by the subcommands. Loaded from JSON; command-line flags override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub target_spacing_mm: f64,
    pub connectivity: u8,
    pub poly_degree: usize,
    pub bin_years: u32,
    pub spline_edf: f64,
    pub centile_levels: Vec<f64>,
    pub codes: Option<PathBuf>,
    pub threads: Option<usize>,
    pub z_threshold: f64,
    pub followup_days: i64,
    pub trauma_window_days: i64,
    pub a1c_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let rules = LabelRules::default();
        Self {
            target_spacing_mm: 3.0,
            connectivity: 26,
            poly_degree: 3,
            bin_years: 5,
            spline_edf: 5.0,
            centile_levels: vec![5.0, 50.0, 95.0],
            codes: None,
            threads: None,
            z_threshold: DEFAULT_Z_THRESHOLD,
            followup_days: rules.followup_days,
            trauma_window_days: rules.trauma_window_days,
            a1c_threshold: rules.a1c_threshold,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        if let Some(codes) = &cfg.codes {
            if codes.is_relative() {
                cfg.codes = Some(path.parent().unwrap_or(Path::new("")).join(codes));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |what: String| Err(CliError::validation(format!("config: {what}")));
        if !(self.target_spacing_mm > 0.0 && self.target_spacing_mm.is_finite()) {
            return bad(format!("target spacing {} mm must be positive", self.target_spacing_mm));
        }
        connectivity(self.connectivity)?;
        if !(1..=6).contains(&self.poly_degree) {
            return bad(format!("polynomial degree {} outside [1, 6]", self.poly_degree));
        }
        if self.bin_years == 0 {
            return bad("matching bin must be at least one year".into());
        }
        if !(1.0..=19.0).contains(&self.spline_edf) {
            return bad(format!("spline edf {} outside [1, 19]", self.spline_edf));
        }
        if self.centile_levels.is_empty()
            || self.centile_levels.iter().any(|l| !(*l > 0.0 && *l < 100.0))
            || self.centile_levels.windows(2).any(|w| w[1] <= w[0])
        {
            return bad("centile levels must be strictly increasing within (0, 100)".into());
        }
        if self.threads == Some(0) {
            return bad("thread count must be at least 1".into());
        }
        if !(self.z_threshold > 0.0) {
            return bad("z threshold must be positive".into());
        }
        if self.followup_days < 0 || self.trauma_window_days < 0 {
            return bad("day windows must be non-negative".into());
        }
        if !(self.a1c_threshold > 0.0) {
            return bad("A1C threshold must be positive".into());
        }
        Ok(())
    }

    pub fn label_rules(&self) -> LabelRules {
        LabelRules {
            followup_days: self.followup_days,
            trauma_window_days: self.trauma_window_days,
            a1c_threshold: self.a1c_threshold,
        }
    }
}

pub fn connectivity(n: u8) -> CliResult<Connectivity> {
    match n {
        6 => Ok(Connectivity::Six),
        18 => Ok(Connectivity::Eighteen),
        26 => Ok(Connectivity::TwentySix),
        other => Err(CliError::validation(format!("connectivity must be 6, 18 or 26, got {other}"))),
    }
}
