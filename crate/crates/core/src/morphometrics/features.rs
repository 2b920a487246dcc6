use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::components::{connected_components, Connectivity};
use super::mesh::{build_mesh, SurfaceMesh};
use crate::error::{Error, Result};
use crate::volume::VoxelMask;

/// Column names, in output order.
pub const FEATURE_NAMES: [&str; 13] = [
    "volume_mm3",
    "surface_area_mm2",
    "sa_to_v_per_mm",
    "elongation",
    "flatness",
    "sphericity",
    "major_axis_mm",
    "minor_axis_mm",
    "least_axis_mm",
    "max_3d_diameter_mm",
    "max_2d_diameter_slice_mm",
    "max_2d_diameter_col_mm",
    "max_2d_diameter_row_mm",
];

/// The thirteen shape measurements of one mask.
///
/// The 2D diameters are taken in anatomical planes of the canonical LAS
/// frame: `slice` is the axial plane (inferior-superior axis dropped),
/// `col` the coronal plane (anterior-posterior dropped) and `row` the
/// sagittal plane (left-right dropped).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub volume_mm3: f64,
    pub surface_area_mm2: f64,
    pub sa_to_v_per_mm: f64,
    pub elongation: f64,
    pub flatness: f64,
    pub sphericity: f64,
    pub major_axis_mm: f64,
    pub minor_axis_mm: f64,
    pub least_axis_mm: f64,
    pub max_3d_diameter_mm: f64,
    pub max_2d_diameter_slice_mm: f64,
    pub max_2d_diameter_col_mm: f64,
    pub max_2d_diameter_row_mm: f64,
}

impl FeatureVector {
    pub fn values(&self) -> [f64; 13] {
        [
            self.volume_mm3,
            self.surface_area_mm2,
            self.sa_to_v_per_mm,
            self.elongation,
            self.flatness,
            self.sphericity,
            self.major_axis_mm,
            self.minor_axis_mm,
            self.least_axis_mm,
            self.max_3d_diameter_mm,
            self.max_2d_diameter_slice_mm,
            self.max_2d_diameter_col_mm,
            self.max_2d_diameter_row_mm,
        ]
    }

    pub fn from_values(v: [f64; 13]) -> Self {
        Self {
            volume_mm3: v[0],
            surface_area_mm2: v[1],
            sa_to_v_per_mm: v[2],
            elongation: v[3],
            flatness: v[4],
            sphericity: v[5],
            major_axis_mm: v[6],
            minor_axis_mm: v[7],
            least_axis_mm: v[8],
            max_3d_diameter_mm: v[9],
            max_2d_diameter_slice_mm: v[10],
            max_2d_diameter_col_mm: v[11],
            max_2d_diameter_row_mm: v[12],
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|&n| n == name)
            .map(|i| self.values()[i])
    }
}

/// Features plus the per-scan diagnostics written next to them.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskReport {
    pub features: FeatureVector,
    /// Voxel-count volume, N times the voxel volume.
    pub voxel_volume_mm3: f64,
    pub n_components: usize,
    pub touches_edge: bool,
}

impl MaskReport {
    pub fn multi_component(&self) -> bool {
        self.n_components > 1
    }
}

/// Extracts the thirteen features. Multi-component masks are measured on
/// their union; use [`analyze_mask`] to see the component count.
pub fn extract_features(mask: &VoxelMask) -> Result<FeatureVector> {
    let mesh = build_mesh(mask)?;
    let eig = axis_eigenvalues(mask)?;
    Ok(features_from_parts(mask, &mesh, eig))
}

/// Features, voxel volume, component count and border contact in one pass.
pub fn analyze_mask(mask: &VoxelMask, connectivity: Connectivity) -> Result<MaskReport> {
    let features = extract_features(mask)?;
    let (n_components, _) = connected_components(mask, connectivity);
    if n_components > 1 {
        log::warn!("mask has {n_components} components; features describe their union");
    }
    Ok(MaskReport {
        features,
        voxel_volume_mm3: mask.count() as f64 * mask.voxel_volume_mm3(),
        n_components,
        touches_edge: crate::qc::edge_touch_flag(mask),
    })
}

fn features_from_parts(mask: &VoxelMask, mesh: &SurfaceMesh, eig: [f64; 3]) -> FeatureVector {
    let volume = mesh.volume();
    let area = mesh.area();
    let [l1, l2, l3] = eig;

    let points = mesh.lattice_vertices();
    let orientation = mask.orientation();
    // voxel axis running along each world axis
    let lr = orientation.voxel_axis_of(0);
    let ap = orientation.voxel_axis_of(1);
    let si = orientation.voxel_axis_of(2);
    let d3 = max_pairwise_distance(points, [0, 1, 2], 3);
    let d_slice = max_pairwise_distance(points, [lr, ap, 0], 2);
    let d_col = max_pairwise_distance(points, [lr, si, 0], 2);
    let d_row = max_pairwise_distance(points, [ap, si, 0], 2);

    FeatureVector {
        volume_mm3: volume,
        surface_area_mm2: area,
        sa_to_v_per_mm: area / volume,
        elongation: (l2 / l1).sqrt(),
        flatness: (l3 / l1).sqrt(),
        sphericity: (36.0 * std::f64::consts::PI * volume * volume).cbrt() / area,
        major_axis_mm: 4.0 * l1.sqrt(),
        minor_axis_mm: 4.0 * l2.sqrt(),
        least_axis_mm: 4.0 * l3.sqrt(),
        max_3d_diameter_mm: d3,
        max_2d_diameter_slice_mm: d_slice,
        max_2d_diameter_col_mm: d_col,
        max_2d_diameter_row_mm: d_row,
    }
}

/// Eigenvalues (descending) of the population covariance of foreground
/// voxel centers in mm.
pub fn axis_eigenvalues(mask: &VoxelMask) -> Result<[f64; 3]> {
    let spacing = mask.spacing();
    let n = mask.count();
    if n < 4 {
        return Err(Error::Degenerate(format!(
            "{n} voxels cannot span three dimensions"
        )));
    }
    // integer-index centering keeps the sums translation invariant
    let (lo, _) = mask.bounding_box().unwrap();
    let mut mean = [0.0; 3];
    for c in mask.foreground() {
        for a in 0..3 {
            mean[a] += (c[a] - lo[a]) as f64 * spacing[a];
        }
    }
    let mean = mean.map(|m| m / n as f64);
    let mut cov = Matrix3::<f64>::zeros();
    for c in mask.foreground() {
        let d = [
            (c[0] - lo[0]) as f64 * spacing[0] - mean[0],
            (c[1] - lo[1]) as f64 * spacing[1] - mean[1],
            (c[2] - lo[2]) as f64 * spacing[2] - mean[2],
        ];
        for r in 0..3 {
            for s in r..3 {
                cov[(r, s)] += d[r] * d[s];
            }
        }
    }
    for r in 0..3 {
        for s in r..3 {
            cov[(r, s)] /= n as f64;
            cov[(s, r)] = cov[(r, s)];
        }
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let ev = [ev[0].max(0.0), ev[1].max(0.0), ev[2].max(0.0)];
    if ev[2] <= 1e-12 * ev[0] {
        return Err(Error::Degenerate(
            "foreground voxel centers are coplanar (covariance rank < 3)".into(),
        ));
    }
    Ok(ev)
}

/// Largest distance between any two points, using the first `dims`
/// coordinates listed in `axes`.
///
/// Exact: points are visited in decreasing distance from their centroid
/// and the scan stops once no remaining point can beat the best pair by
/// the triangle inequality. Every distance that is evaluated is computed
/// the same way a full O(n^2) scan would compute it.
pub fn max_pairwise_distance(points: &[[f64; 3]], axes: [usize; 3], dims: usize) -> f64 {
    let proj: Vec<[f64; 3]> = points
        .iter()
        .map(|p| {
            let mut q = [0.0; 3];
            for d in 0..dims {
                q[d] = p[axes[d]];
            }
            q
        })
        .collect();
    if proj.len() < 2 {
        return 0.0;
    }
    let n = proj.len() as f64;
    let mut c = [0.0; 3];
    for p in &proj {
        for a in 0..3 {
            c[a] += p[a];
        }
    }
    let c = c.map(|v| v / n);
    let radius = |p: &[f64; 3]| {
        ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt()
    };
    let mut order: Vec<(f64, usize)> = proj.iter().enumerate().map(|(i, p)| (radius(p), i)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let r_max = order[0].0;

    let mut best_sq = 0.0f64;
    for (pos, &(r, i)) in order.iter().enumerate() {
        // slack covers rounding in the radius bound
        let bound = (r + r_max) * (1.0 + 1e-12) + 1e-12;
        if bound * bound < best_sq {
            break;
        }
        let p = proj[i];
        for &(_, j) in &order[pos + 1..] {
            let q = proj[j];
            let dsq = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
            if dsq > best_sq {
                best_sq = dsq;
            }
        }
    }
    best_sq.sqrt()
}

/// Physical bounding-box extents along the world x (L-R), y (A-P) and
/// z (S-I) axes, measured to voxel edges, and the face-area ratios
/// `(ex/ez, ey/ex, ey/ez)`.
pub fn bounding_box_face_ratios(mask: &VoxelMask) -> Result<[f64; 3]> {
    let Some((lo, hi)) = mask.bounding_box() else {
        return Err(Error::Degenerate("empty mask has no bounding box".into()));
    };
    let o = mask.orientation();
    let extent = |world: usize| {
        let a = o.voxel_axis_of(world);
        (hi[a] - lo[a] + 1) as f64 * mask.spacing()[a]
    };
    let (ex, ey, ez) = (extent(0), extent(1), extent(2));
    if ex <= 0.0 || ey <= 0.0 || ez <= 0.0 {
        return Err(Error::Degenerate("zero bounding-box extent".into()));
    }
    Ok([ex / ez, ey / ex, ey / ez])
}
