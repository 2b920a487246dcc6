use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};

use super::extract::load_canonical;
use crate::error::CliResult;
use crate::render::mip::{self, Axis};
use crate::render::plots;
use crate::table::{write_file, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    Centiles,
    Boxstats,
    Trend,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long, value_enum)]
    kind: PlotKind,
    #[arg(long = "in")]
    input: PathBuf,
    /// Feature to draw; the first one in the file by default.
    #[arg(long)]
    feature: Option<String>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MipArgs {
    #[arg(long)]
    mask: PathBuf,
    #[arg(long, value_enum, default_value = "coronal")]
    axis: Axis,
    #[arg(short, long)]
    out: PathBuf,
}

pub fn render(kind: PlotKind, input: &Path, feature: Option<&str>) -> CliResult<String> {
    let t = Table::read(input)?;
    match kind {
        PlotKind::Centiles => plots::centile_fan(&t, feature),
        PlotKind::Boxstats => plots::boxplots(&t, feature),
        PlotKind::Trend => plots::trend(&t),
    }
}

pub fn run(args: PlotArgs) -> CliResult<()> {
    let svg = render(args.kind, &args.input, args.feature.as_deref())?;
    write_file(&args.out, svg.as_bytes())
}

pub fn run_mip(args: MipArgs) -> CliResult<()> {
    let mask = load_canonical(&args.mask, None)?;
    write_file(&args.out, mip::render(&mask, args.axis).as_bytes())
}
