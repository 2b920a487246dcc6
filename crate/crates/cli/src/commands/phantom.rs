use std::path::PathBuf;

use clap::{Args, ValueEnum};
use morphspan_core::morphometrics::FEATURE_NAMES;
use morphspan_core::phantoms::{analytic_features, generate, PhantomKind, PhantomSpec};
use morphspan_core::volume::write_mask;
use serde_json::{json, Map, Value};

use crate::error::{CliError, CliResult, Context};
use crate::table::write_file;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Sphere,
    Ellipsoid,
    Box,
    TwoBlobs,
    EdgeTouchingSphere,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Radius in mm (sphere, two-blobs, edge-touching-sphere).
    #[arg(long = "r")]
    radius: Option<f64>,
    /// Semi-axes a,b,c in mm.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    semi_axes: Option<Vec<f64>>,
    /// Edge lengths in mm.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    edges: Option<Vec<f64>>,
    /// Center distance of the two blobs, mm.
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long, default_value_t = 3.0)]
    spacing: f64,
    #[arg(long, default_value_t = 2)]
    padding: usize,
    /// Output mask (.nii or .nii.gz); the sidecar goes next to it as .json.
    #[arg(short, long)]
    out: PathBuf,
}

fn need<T>(v: Option<T>, flag: &str, kind: Kind) -> CliResult<T> {
    v.ok_or_else(|| CliError::validation(format!("--{flag} is required for {kind:?} phantoms")))
}

fn triple(v: Vec<f64>) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

impl PhantomArgs {
    fn spec(&self) -> CliResult<PhantomSpec> {
        let kind = match self.kind {
            Kind::Sphere => PhantomKind::Sphere { radius: need(self.radius, "r", self.kind)? },
            Kind::EdgeTouchingSphere => PhantomKind::EdgeTouchingSphere { radius: need(self.radius, "r", self.kind)? },
            Kind::Ellipsoid => {
                PhantomKind::Ellipsoid { semi_axes: triple(need(self.semi_axes.clone(), "semi-axes", self.kind)?) }
            }
            Kind::Box => PhantomKind::Box { edges: triple(need(self.edges.clone(), "edges", self.kind)?) },
            Kind::TwoBlobs => PhantomKind::TwoBlobs {
                radius: need(self.radius, "r", self.kind)?,
                separation: need(self.separation, "separation", self.kind)?,
            },
        };
        Ok(PhantomSpec::new(kind, self.spacing, self.padding))
    }
}

/// `s.nii.gz` → `s.json`.
pub fn sidecar_path(out: &std::path::Path) -> PathBuf {
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = name.strip_suffix(".gz").unwrap_or(&name);
    let stem = stem.strip_suffix(".nii").unwrap_or(stem);
    out.with_file_name(format!("{stem}.json"))
}

pub fn run(args: PhantomArgs) -> CliResult<()> {
    let spec = args.spec()?;
    let mask = generate(&spec)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    write_mask(&mask, &args.out).context(args.out.display())?;

    let analytic = match analytic_features(&spec) {
        Ok(f) => {
            let mut m = Map::new();
            for (name, v) in FEATURE_NAMES.iter().zip(f.values()) {
                m.insert((*name).into(), json!(v));
            }
            Value::Object(m)
        }
        Err(_) => Value::Null,
    };
    let sidecar = json!({
        "spec": spec,
        "dims": mask.dims(),
        "foreground_voxels": mask.count(),
        "analytic_features": analytic,
    });
    let text = serde_json::to_string_pretty(&sidecar).expect("json value") + "\n";
    write_file(sidecar_path(&args.out), text.as_bytes())
}
