//! Deterministic synthetic cohort: ellipsoidal pancreas masks, patient
//! table, coded events and code lists.

use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use clap::Args;
use morphspan_core::cohort::CodeSets;
use morphspan_core::volume::{write_mask, AxisDirection, Geometry, Orientation, VoxelMask};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde_json::json;

use crate::error::{CliError, CliResult, Context};
use crate::table::{num, write_file, CsvOut};

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value = "demo")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 200)]
    patients: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

pub fn demo_codes() -> CodeSets {
    CodeSets {
        t2d: vec!["E11*".into(), "250.00".into()],
        t1d: vec!["E10*".into()],
        cancer: vec!["C25*".into()],
        sepsis: vec!["A41*".into()],
        trauma: vec!["S36*".into()],
        other_diabetes: vec!["E13*".into()],
    }
}

/// Axis-aligned ellipsoid on an anisotropic grid, LAS or RAS.
fn ellipsoid_mask(semi: [f64; 3], spacing: [f64; 3], ras: bool) -> CliResult<VoxelMask> {
    let dims: [usize; 3] = std::array::from_fn(|a| (2.0 * semi[a] / spacing[a]).ceil() as usize + 5);
    let center: [f64; 3] = std::array::from_fn(|a| (dims[a] - 1) as f64 / 2.0);
    let orientation = if ras {
        Orientation::new([AxisDirection::new(0, true), AxisDirection::new(1, true), AxisDirection::new(2, true)])?
    } else {
        Orientation::LAS
    };
    let origin = [-(center[0] * spacing[0]), -(center[1] * spacing[1]), -(center[2] * spacing[2])];
    let g = Geometry::new(dims, spacing, orientation, origin)?;
    Ok(VoxelMask::from_fn(g, |i, j, k| {
        let d = [i as f64, j as f64, k as f64];
        (0..3).map(|a| ((d[a] - center[a]) * spacing[a] / semi[a]).powi(2)).sum::<f64>() <= 1.0
    }))
}

struct Event {
    days: i64,
    vocabulary: &'static str,
    code: &'static str,
    description: &'static str,
}

fn ev(days: i64, vocabulary: &'static str, code: &'static str, description: &'static str) -> Event {
    Event { days, vocabulary, code, description }
}

pub fn demo(dir: &Path, n: usize, seed: u64) -> CliResult<()> {
    if n < 20 {
        return Err(CliError::validation("the demo needs at least 20 patients"));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let noise: Normal<f64> = Normal::new(0.0, 1.0).expect("unit normal");
    let base = NaiveDate::from_ymd_opt(2010, 1, 1).expect("valid date");

    let mut manifest = CsvOut::new(&["scan_id", "patient_id", "path"]);
    let mut patients = CsvOut::new(&["patient_id", "age_years", "sex", "weight_kg", "modality", "scan_date", "a1c"]);
    let mut events = CsvOut::new(&["patient_id", "date", "vocabulary", "code", "description"]);

    for p in 0..n {
        let id = format!("P{p:04}");
        let age = (rng.random_range(20.0f64..90.0) * 10.0).round() / 10.0;
        let male = rng.random_bool(0.5);
        let weight = ((if male { 84.0 } else { 72.0 }) + 13.0 * noise.sample(&mut rng)).clamp(40.0, 160.0);
        let weight = (weight * 10.0).round() / 10.0;
        let t2d = rng.random_bool(0.35);
        let modality = match rng.random_range(0..10) {
            0..=5 => "ct_contrast",
            6..=8 => "ct_noncontrast",
            _ => "mri",
        };
        let scan_date = base + Duration::days(rng.random_range(0..3650));

        // size peaks around forty
        let t = (age - 40.0) / 50.0;
        let mut size = 1.0 - 0.35 * t * t;
        size *= if male { 1.06 } else { 1.0 };
        size *= if t2d { 0.88 } else { 1.0 };
        size *= 1.0 + 0.003 * (weight - 78.0);
        size *= (0.07 * noise.sample(&mut rng)).exp();
        let semi: [f64; 3] = std::array::from_fn(|a| {
            [42.0, 14.0, 9.0][a] * size * (0.06 * noise.sample(&mut rng)).exp()
        });
        let spacing = [[1.5, 1.5, 2.5], [1.0, 1.0, 3.0], [2.0, 2.0, 2.0]][p % 3];
        let mask = ellipsoid_mask(semi, spacing, p % 2 == 1)?;
        let rel = format!("masks/{id}.nii.gz");
        let path = dir.join(&rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        write_mask(&mask, &path).context(path.display())?;
        manifest.row(&[format!("S{p:04}"), id.clone(), rel]);

        let mut evs = Vec::new();
        if t2d {
            evs.push(ev(-rng.random_range(0..1500), "ICD", "E11.9", "type 2 diabetes mellitus without complications"));
            if rng.random_bool(0.3) {
                evs.push(ev(rng.random_range(1..300), "PHECODE", "250.00", "diabetes type ii"));
            }
        }
        if rng.random_bool(0.3) {
            evs.push(ev(-rng.random_range(0..2000), "ICD", "I10", "essential hypertension"));
        }
        match rng.random_range(0..100) {
            0..=2 => evs.push(ev(-rng.random_range(0..400), "ICD", "C25.0", "malignant neoplasm of head of pancreas")),
            3..=4 => evs.push(ev(rng.random_range(-200..200), "ICD", "K86.1", "other chronic pancreatitis")),
            5..=6 => evs.push(ev(rng.random_range(-10..10), "ICD", "S36.1", "injury of liver")),
            7..=8 => evs.push(ev(-rng.random_range(0..500), "ICD", "E10.9", "type 1 diabetes mellitus")),
            9 => evs.push(ev(rng.random_range(-30..30), "ICD", "A41.9", "sepsis, unspecified organism")),
            // diabetes recorded long after the follow-up window
            10..=12 => evs.push(ev(rng.random_range(400..1500), "ICD", "E11.9", "type 2 diabetes mellitus")),
            _ => {}
        }
        let a1c = if rng.random_bool(0.6) {
            let mean = if t2d { 7.6 } else if rng.random_bool(0.05) { 6.9 } else { 5.4 };
            Some(((mean + 0.4 * noise.sample(&mut rng)) * 10.0f64).round() / 10.0)
        } else {
            None
        };
        patients.row(&[
            id.clone(),
            num(age),
            (if male { "M" } else { "F" }).to_string(),
            num(weight),
            modality.to_string(),
            scan_date.format("%Y-%m-%d").to_string(),
            a1c.map(num).unwrap_or_default(),
        ]);
        for e in evs {
            events.row(&[
                id.clone(),
                (scan_date + Duration::days(e.days)).format("%Y-%m-%d").to_string(),
                e.vocabulary.to_string(),
                e.code.to_string(),
                e.description.to_string(),
            ]);
        }
    }
    manifest.save(dir.join("manifest.csv"))?;
    patients.save(dir.join("patients.csv"))?;
    events.save(dir.join("events.csv"))?;
    let codes = serde_json::to_string_pretty(&demo_codes()).expect("serializable") + "\n";
    write_file(dir.join("codes.json"), codes.as_bytes())?;
    let config = serde_json::to_string_pretty(&json!({ "codes": "codes.json" })).expect("serializable") + "\n";
    write_file(dir.join("config.json"), config.as_bytes())
}

pub fn run(args: DemoArgs) -> CliResult<()> {
    demo(&args.out_dir, args.patients, args.seed)
}
