//! Synthetic masks of solids with closed-form morphology.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphometrics::FeatureVector;
use crate::volume::{Geometry, Orientation, VoxelMask};

/// Solid to voxelize; lengths in mm. Semi-axes and edges are listed along
/// voxel axes 0, 1, 2 of the LAS grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PhantomKind {
    Sphere { radius: f64 },
    Ellipsoid { semi_axes: [f64; 3] },
    Box { edges: [f64; 3] },
    /// Two equal spheres whose centers lie `separation` apart along axis 0.
    TwoBlobs { radius: f64, separation: f64 },
    /// Sphere cut by the low face of axis 0 so it reaches the grid border.
    EdgeTouchingSphere { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub spacing: f64,
    /// Background voxels added on every side.
    pub padding: usize,
}

impl PhantomSpec {
    pub fn new(kind: PhantomKind, spacing: f64, padding: usize) -> Self {
        Self {
            kind,
            spacing,
            padding,
        }
    }

    pub fn sphere(radius: f64, spacing: f64) -> Self {
        Self::new(PhantomKind::Sphere { radius }, spacing, 2)
    }

    pub fn ellipsoid(semi_axes: [f64; 3], spacing: f64) -> Self {
        Self::new(PhantomKind::Ellipsoid { semi_axes }, spacing, 2)
    }

    pub fn cuboid(edges: [f64; 3], spacing: f64) -> Self {
        Self::new(PhantomKind::Box { edges }, spacing, 2)
    }

    fn validate(&self) -> Result<()> {
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::invalid("phantom spacing must be positive"));
        }
        let lengths: Vec<f64> = match self.kind {
            PhantomKind::Sphere { radius } | PhantomKind::EdgeTouchingSphere { radius } => vec![radius],
            PhantomKind::Ellipsoid { semi_axes } => semi_axes.to_vec(),
            PhantomKind::Box { edges } => edges.to_vec(),
            PhantomKind::TwoBlobs { radius, separation } => {
                if separation <= 2.0 * radius + 2.0 * self.spacing {
                    return Err(Error::invalid(format!(
                        "blob centers {separation} mm apart must exceed 2r + 2*spacing = {}",
                        2.0 * radius + 2.0 * self.spacing
                    )));
                }
                vec![radius, separation]
            }
        };
        if lengths.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(Error::invalid("phantom lengths must be positive"));
        }
        let smallest_extent = match self.kind {
            PhantomKind::Box { edges } => edges.iter().copied().fold(f64::INFINITY, f64::min),
            PhantomKind::Ellipsoid { semi_axes } => 2.0 * semi_axes.iter().copied().fold(f64::INFINITY, f64::min),
            _ => 2.0 * lengths[0],
        };
        if smallest_extent < self.spacing {
            return Err(Error::Degenerate(format!(
                "solid extent {smallest_extent} mm is below one voxel ({} mm)",
                self.spacing
            )));
        }
        Ok(())
    }

    /// Half-extent of the solid along each axis, relative to its center.
    fn half_extent(&self) -> [f64; 3] {
        match self.kind {
            PhantomKind::Sphere { radius } | PhantomKind::EdgeTouchingSphere { radius } => [radius; 3],
            PhantomKind::Ellipsoid { semi_axes } => semi_axes,
            PhantomKind::Box { edges } => edges.map(|e| e / 2.0),
            PhantomKind::TwoBlobs { radius, separation } => {
                [radius + separation / 2.0, radius, radius]
            }
        }
    }

    fn contains(&self, p: [f64; 3]) -> bool {
        let [x, y, z] = p;
        match self.kind {
            PhantomKind::Sphere { radius } | PhantomKind::EdgeTouchingSphere { radius } => {
                x * x + y * y + z * z <= radius * radius
            }
            PhantomKind::Ellipsoid { semi_axes: [a, b, c] } => {
                (x / a).powi(2) + (y / b).powi(2) + (z / c).powi(2) <= 1.0
            }
            PhantomKind::Box { edges } => {
                x.abs() <= edges[0] / 2.0 && y.abs() <= edges[1] / 2.0 && z.abs() <= edges[2] / 2.0
            }
            PhantomKind::TwoBlobs { radius, separation } => {
                let h = separation / 2.0;
                let r2 = radius * radius;
                (x - h).powi(2) + y * y + z * z <= r2 || (x + h).powi(2) + y * y + z * z <= r2
            }
        }
    }
}

/// Voxelizes the solid: a voxel is foreground iff its center lies inside.
/// The grid is LAS and isotropic, centered on the solid.
pub fn generate(spec: &PhantomSpec) -> Result<VoxelMask> {
    spec.validate()?;
    let s = spec.spacing;
    let half = spec.half_extent();
    let touching = matches!(spec.kind, PhantomKind::EdgeTouchingSphere { .. });

    let mut dims = [0usize; 3];
    let mut center = [0.0; 3]; // solid center in voxel-index units
    for a in 0..3 {
        let core = (2.0 * half[a] / s - 1e-9).ceil().max(1.0) as usize;
        dims[a] = core + 2 * spec.padding;
        center[a] = (dims[a] as f64 - 1.0) / 2.0;
    }
    if touching {
        // no margin below axis 0, so the low pole voxel sits on the border
        dims[0] -= spec.padding;
        center[0] -= spec.padding as f64;
    }

    // world position of voxel (0,0,0) so the solid center sits at the origin
    let origin = [s * center[0], -s * center[1], -s * center[2]];
    let geometry = Geometry::new(dims, [s; 3], Orientation::LAS, origin)?;
    let mask = VoxelMask::from_fn(geometry, |i, j, k| {
        let p = [
            (i as f64 - center[0]) * s,
            (j as f64 - center[1]) * s,
            (k as f64 - center[2]) * s,
        ];
        spec.contains(p)
    });
    if mask.count() == 0 {
        return Err(Error::Degenerate("phantom contains no voxel centers".into()));
    }
    Ok(mask)
}

/// Closed-form features of a sphere, ellipsoid or box.
///
/// Ellipsoid surface area uses Thomsen's approximation (p = 1.6075,
/// relative error below 1.1 %, exact for spheres).
pub fn analytic_features(spec: &PhantomSpec) -> Result<FeatureVector> {
    match spec.kind {
        PhantomKind::Sphere { radius } => Ok(ellipsoid_features([radius; 3])),
        PhantomKind::Ellipsoid { semi_axes } => Ok(ellipsoid_features(semi_axes)),
        PhantomKind::Box { edges } => Ok(box_features(edges)),
        other => Err(Error::invalid(format!(
            "no closed-form features for {other:?}"
        ))),
    }
}

fn sorted_desc(v: [f64; 3]) -> [f64; 3] {
    let mut s = v;
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn ellipsoid_features(semi: [f64; 3]) -> FeatureVector {
    let [a, b, c] = sorted_desc(semi);
    let volume = 4.0 / 3.0 * PI * a * b * c;
    let p = 1.6075;
    let area = if a == c {
        4.0 * PI * a * a
    } else {
        4.0 * PI * (((a * b).powf(p) + (a * c).powf(p) + (b * c).powf(p)) / 3.0).powf(1.0 / p)
    };
    let axis = |r: f64| 4.0 * r / 5f64.sqrt();
    // 2D diameters over LAS planes: slice drops axis 2, col drops axis 1, row drops axis 0
    let [s0, s1, s2] = semi;
    FeatureVector {
        volume_mm3: volume,
        surface_area_mm2: area,
        sa_to_v_per_mm: area / volume,
        elongation: b / a,
        flatness: c / a,
        sphericity: (36.0 * PI * volume * volume).cbrt() / area,
        major_axis_mm: axis(a),
        minor_axis_mm: axis(b),
        least_axis_mm: axis(c),
        max_3d_diameter_mm: 2.0 * a,
        max_2d_diameter_slice_mm: 2.0 * s0.max(s1),
        max_2d_diameter_col_mm: 2.0 * s0.max(s2),
        max_2d_diameter_row_mm: 2.0 * s1.max(s2),
    }
}

fn box_features(edges: [f64; 3]) -> FeatureVector {
    let [e0, e1, e2] = edges;
    let volume = e0 * e1 * e2;
    let area = 2.0 * (e0 * e1 + e1 * e2 + e0 * e2);
    let [l1, l2, l3] = sorted_desc(edges);
    // uniform box: variance along an edge of length L is L^2 / 12
    let axis = |l: f64| 4.0 * l / 12f64.sqrt();
    FeatureVector {
        volume_mm3: volume,
        surface_area_mm2: area,
        sa_to_v_per_mm: area / volume,
        elongation: l2 / l1,
        flatness: l3 / l1,
        sphericity: (36.0 * PI * volume * volume).cbrt() / area,
        major_axis_mm: axis(l1),
        minor_axis_mm: axis(l2),
        least_axis_mm: axis(l3),
        max_3d_diameter_mm: (e0 * e0 + e1 * e1 + e2 * e2).sqrt(),
        max_2d_diameter_slice_mm: e0.hypot(e1),
        max_2d_diameter_col_mm: e0.hypot(e2),
        max_2d_diameter_row_mm: e1.hypot(e2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphometrics::{connected_components, Connectivity};
    use crate::qc::edge_touch_flag;

    #[test]
    fn sphere_voxel_count_near_analytic() {
        let m = generate(&PhantomSpec::sphere(30.0, 3.0)).unwrap();
        let expected = 4.0 / 3.0 * PI * 30f64.powi(3) / 27.0;
        let rel = (m.count() as f64 - expected).abs() / expected;
        assert!(rel < 0.02, "count {} vs {expected}", m.count());
        assert!(!edge_touch_flag(&m));
    }

    #[test]
    fn grid_aligned_box_is_exact() {
        let m = generate(&PhantomSpec::cuboid([30.0; 3], 3.0)).unwrap();
        assert_eq!(m.count(), 1000);
        let m = generate(&PhantomSpec::cuboid([30.0, 12.0, 6.0], 3.0)).unwrap();
        assert_eq!(m.count(), 10 * 4 * 2);
    }

    #[test]
    fn two_blobs_are_two_components() {
        let spec = PhantomSpec::new(
            PhantomKind::TwoBlobs {
                radius: 9.0,
                separation: 30.0,
            },
            3.0,
            2,
        );
        let m = generate(&spec).unwrap();
        assert_eq!(connected_components(&m, Connectivity::TwentySix).0, 2);
        let tight = PhantomSpec::new(
            PhantomKind::TwoBlobs {
                radius: 9.0,
                separation: 22.0,
            },
            3.0,
            2,
        );
        assert!(generate(&tight).is_err());
    }

    #[test]
    fn edge_touching_sphere_touches() {
        let spec = PhantomSpec::new(PhantomKind::EdgeTouchingSphere { radius: 15.0 }, 3.0, 2);
        let m = generate(&spec).unwrap();
        assert!(edge_touch_flag(&m));
        assert_eq!(connected_components(&m, Connectivity::TwentySix).0, 1);
    }

    #[test]
    fn degenerate_specs_rejected() {
        assert!(matches!(
            generate(&PhantomSpec::sphere(1.0, 3.0)),
            Err(Error::Degenerate(_))
        ));
        assert!(generate(&PhantomSpec::sphere(-1.0, 3.0)).is_err());
        assert!(generate(&PhantomSpec::cuboid([10.0, 10.0, 2.0], 3.0)).is_err());
    }

    #[test]
    fn closed_form_sphere() {
        let f = analytic_features(&PhantomSpec::sphere(30.0, 3.0)).unwrap();
        assert!((f.volume_mm3 - 113_097.3).abs() < 0.1);
        assert!((f.surface_area_mm2 - 11_309.7).abs() < 0.1);
        assert!((f.sphericity - 1.0).abs() < 1e-12);
        for l in [f.major_axis_mm, f.minor_axis_mm, f.least_axis_mm] {
            assert!((l - 53.666).abs() < 1e-3);
        }
        for d in [
            f.max_3d_diameter_mm,
            f.max_2d_diameter_slice_mm,
            f.max_2d_diameter_col_mm,
            f.max_2d_diameter_row_mm,
        ] {
            assert_eq!(d, 60.0);
        }
    }

    #[test]
    fn closed_form_ellipsoid_and_box() {
        let f = analytic_features(&PhantomSpec::ellipsoid([40.0, 20.0, 10.0], 2.0)).unwrap();
        assert!((f.elongation - 0.5).abs() < 1e-12);
        assert!((f.flatness - 0.25).abs() < 1e-12);
        assert!((f.major_axis_mm - 160.0 / 5f64.sqrt()).abs() < 1e-12);

        let b = analytic_features(&PhantomSpec::cuboid([20.0; 3], 2.0)).unwrap();
        assert_eq!(b.volume_mm3, 8000.0);
        assert_eq!(b.surface_area_mm2, 2400.0);

        let blobs = PhantomSpec::new(
            PhantomKind::TwoBlobs {
                radius: 5.0,
                separation: 20.0,
            },
            1.0,
            1,
        );
        assert!(analytic_features(&blobs).is_err());
    }
}
