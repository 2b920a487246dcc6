//! Maximum intensity projections of LAS masks as SVG rasters.

use std::fmt::Write;

use clap::ValueEnum;
use log::warn;
use morphspan_core::volume::VoxelMask;

use super::svg::{f, Svg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    /// Along superior-inferior; anterior up, patient left to the right.
    Axial,
    /// Along anterior-posterior; superior up.
    Coronal,
    /// Along left-right; superior up, anterior to the left.
    Sagittal,
}

pub struct Projection {
    pub width: usize,
    pub height: usize,
    /// Pixel size in mm (column, row).
    pub pixel_mm: (f64, f64),
    /// Row-major, row 0 at the top.
    pub pixels: Vec<bool>,
}

/// Projects a mask that is already in LAS order.
pub fn project(mask: &VoxelMask, axis: Axis) -> Projection {
    let [n0, n1, n2] = mask.dims();
    let s = mask.spacing();
    let (width, height, pixel_mm) = match axis {
        Axis::Axial => (n0, n1, (s[0], s[1])),
        Axis::Coronal => (n0, n2, (s[0], s[2])),
        Axis::Sagittal => (n1, n2, (s[1], s[2])),
    };
    let mut pixels = vec![false; width * height];
    for [i, j, k] in mask.foreground() {
        let (c, r) = match axis {
            Axis::Axial => (i, n1 - 1 - j),
            Axis::Coronal => (i, n2 - 1 - k),
            Axis::Sagittal => (n1 - 1 - j, n2 - 1 - k),
        };
        pixels[r * width + c] = true;
    }
    Projection { width, height, pixel_mm, pixels }
}

const PX_PER_MM: f64 = 2.0;
const MARGIN: f64 = 20.0;
const BAR_SPACE: f64 = 60.0;

pub fn render(mask: &VoxelMask, axis: Axis) -> String {
    let p = project(mask, axis);
    let count = p.pixels.iter().filter(|v| **v).count();
    if count == 0 {
        warn!("mask is empty; writing a blank projection");
    }
    let (pw, ph) = (p.pixel_mm.0 * PX_PER_MM, p.pixel_mm.1 * PX_PER_MM);
    let img_w = p.width as f64 * pw;
    let img_h = p.height as f64 * ph;
    let bar = 100.0 * PX_PER_MM;
    let mut svg = Svg::new(img_w.max(bar) + 2.0 * MARGIN, img_h + 2.0 * MARGIN + BAR_SPACE);
    svg.rect(MARGIN, MARGIN, img_w, img_h, r##"fill="#000000""##);
    let mut body = format!(r##"<g id="mip" data-pixels="{count}" fill="#ffffff">"##);
    body.push('\n');
    for r in 0..p.height {
        for c in 0..p.width {
            if p.pixels[r * p.width + c] {
                let _ = writeln!(
                    body,
                    r#"<rect class="px" x="{}" y="{}" width="{}" height="{}"/>"#,
                    f(MARGIN + c as f64 * pw),
                    f(MARGIN + r as f64 * ph),
                    f(pw),
                    f(ph)
                );
            }
        }
    }
    body.push_str("</g>");
    svg.raw(&body);

    // one-decimeter bar with millimetre ticks every 10 mm
    let y = MARGIN + img_h + 30.0;
    svg.line(MARGIN, y, MARGIN + bar, y, "#000000", 2.0);
    for t in 0..=10 {
        let x = MARGIN + t as f64 * 10.0 * PX_PER_MM;
        let len = if t % 5 == 0 { 8.0 } else { 4.0 };
        svg.line(x, y, x, y - len, "#000000", 1.0);
    }
    svg.text(MARGIN, y + 14.0, "middle", 10.0, "0");
    svg.text(MARGIN + bar / 2.0, y + 14.0, "middle", 10.0, "50 mm");
    svg.text(MARGIN + bar, y + 14.0, "middle", 10.0, "1 dm");
    svg.finish()
}
