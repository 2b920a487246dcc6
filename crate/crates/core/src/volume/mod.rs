//! Binary organ masks on axis-aligned voxel grids.
//!
//! World coordinates follow the NIfTI RAS+ convention: +x points to the
//! patient's right, +y anterior, +z superior. A grid's [`Orientation`] says
//! which world direction each voxel axis increases toward, so `LAS` means
//! voxel axis 0 runs toward the left (negative x), axis 1 anterior and
//! axis 2 superior.

mod nifti;
mod ops;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use nifti::{read_labels, read_mask, write_labels, write_mask};
pub use ops::{
    canonicalize_labels_las, canonicalize_las, crop_between_vertebrae, resample_isotropic, CropResult,
};

/// One voxel axis expressed as a signed world axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AxisDirection {
    /// World axis index: 0 = x (R/L), 1 = y (A/P), 2 = z (S/I).
    pub world_axis: usize,
    /// Whether the voxel index increases toward the positive world direction.
    pub positive: bool,
}

impl AxisDirection {
    pub const fn new(world_axis: usize, positive: bool) -> Self {
        Self {
            world_axis,
            positive,
        }
    }

    pub fn sign(self) -> f64 {
        if self.positive {
            1.0
        } else {
            -1.0
        }
    }

    pub fn letter(self) -> char {
        match (self.world_axis, self.positive) {
            (0, true) => 'R',
            (0, false) => 'L',
            (1, true) => 'A',
            (1, false) => 'P',
            (2, true) => 'S',
            _ => 'I',
        }
    }

    fn from_letter(c: char) -> Option<Self> {
        let d = match c.to_ascii_uppercase() {
            'R' => Self::new(0, true),
            'L' => Self::new(0, false),
            'A' => Self::new(1, true),
            'P' => Self::new(1, false),
            'S' => Self::new(2, true),
            'I' => Self::new(2, false),
            _ => return None,
        };
        Some(d)
    }
}

/// Axis-direction code of a voxel grid, e.g. `LAS` or `RAS`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Orientation(pub [AxisDirection; 3]);

impl Orientation {
    pub const LAS: Orientation = Orientation([
        AxisDirection::new(0, false),
        AxisDirection::new(1, true),
        AxisDirection::new(2, true),
    ]);
    pub const RAS: Orientation = Orientation([
        AxisDirection::new(0, true),
        AxisDirection::new(1, true),
        AxisDirection::new(2, true),
    ]);

    /// Builds an orientation, rejecting codes that reuse a world axis.
    pub fn new(axes: [AxisDirection; 3]) -> Result<Self> {
        let mut seen = [false; 3];
        for a in axes {
            if a.world_axis > 2 || seen[a.world_axis] {
                return Err(Error::UnsupportedGeometry(format!(
                    "orientation {:?} does not span three distinct world axes",
                    axes
                )));
            }
            seen[a.world_axis] = true;
        }
        Ok(Self(axes))
    }

    /// Voxel axis that runs along the given world axis.
    pub fn voxel_axis_of(&self, world_axis: usize) -> usize {
        self.0
            .iter()
            .position(|a| a.world_axis == world_axis)
            .expect("orientation spans all world axes")
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in self.0 {
            write!(f, "{}", a.letter())?;
        }
        Ok(())
    }
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters: Vec<char> = s.chars().collect();
        if letters.len() != 3 {
            return Err(Error::invalid(format!("orientation code `{s}` must have 3 letters")));
        }
        let mut axes = [AxisDirection::new(0, true); 3];
        for (slot, c) in axes.iter_mut().zip(letters) {
            *slot = AxisDirection::from_letter(c)
                .ok_or_else(|| Error::invalid(format!("bad orientation letter `{c}` in `{s}`")))?;
        }
        Orientation::new(axes)
    }
}

/// Shape and physical placement of an axis-aligned voxel grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub dims: [usize; 3],
    /// Voxel size in mm along each voxel axis.
    pub spacing: [f64; 3],
    pub orientation: Orientation,
    /// World position (mm) of the center of voxel (0, 0, 0).
    pub origin: [f64; 3],
}

impl Geometry {
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        orientation: Orientation,
        origin: [f64; 3],
    ) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::invalid(format!("grid dims {dims:?} must all be positive")));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::invalid(format!("spacing {spacing:?} must be positive")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::invalid("origin must be finite"));
        }
        Ok(Self {
            dims,
            spacing,
            orientation,
            origin,
        })
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index with axis 0 varying fastest (NIfTI order).
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    /// World position of a (possibly fractional) voxel coordinate.
    pub fn world(&self, ijk: [f64; 3]) -> [f64; 3] {
        let mut p = self.origin;
        for (axis, dir) in self.orientation.0.iter().enumerate() {
            p[dir.world_axis] += dir.sign() * self.spacing[axis] * ijk[axis];
        }
        p
    }

    /// 4x4 voxel-to-world affine (row major).
    pub fn affine(&self) -> [[f64; 4]; 4] {
        let mut m = [[0.0; 4]; 4];
        for (axis, dir) in self.orientation.0.iter().enumerate() {
            m[dir.world_axis][axis] = dir.sign() * self.spacing[axis];
        }
        for r in 0..3 {
            m[r][3] = self.origin[r];
        }
        m[3][3] = 1.0;
        m
    }

    /// Decodes an affine that must be axis aligned within `tol` (relative to
    /// each column's norm).
    pub fn from_affine(dims: [usize; 3], affine: &[[f64; 4]; 4], tol: f64) -> Result<Self> {
        let mut axes = [AxisDirection::new(0, true); 3];
        let mut spacing = [0.0; 3];
        for col in 0..3 {
            let column = [affine[0][col], affine[1][col], affine[2][col]];
            let norm = column.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::UnsupportedGeometry(format!(
                    "affine column {col} has zero length"
                )));
            }
            let (world_axis, &major) = column
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .unwrap();
            for (r, v) in column.iter().enumerate() {
                if r != world_axis && v.abs() > tol * norm {
                    return Err(Error::UnsupportedGeometry(format!(
                        "oblique affine: column {col} = {column:?}"
                    )));
                }
            }
            axes[col] = AxisDirection::new(world_axis, major > 0.0);
            spacing[col] = norm;
        }
        let orientation = Orientation::new(axes)?;
        Geometry::new(
            dims,
            spacing,
            orientation,
            [affine[0][3], affine[1][3], affine[2][3]],
        )
    }
}

/// Binary occupancy grid with physical geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelMask {
    geometry: Geometry,
    data: Vec<bool>,
}

impl VoxelMask {
    pub fn new(geometry: Geometry, data: Vec<bool>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::invalid(format!(
                "mask data has {} voxels but dims {:?} need {}",
                data.len(),
                geometry.dims,
                geometry.len()
            )));
        }
        Ok(Self { geometry, data })
    }

    pub fn empty(geometry: Geometry) -> Self {
        let data = vec![false; geometry.len()];
        Self { geometry, data }
    }

    pub fn from_fn(geometry: Geometry, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let [nx, ny, nz] = geometry.dims;
        let mut data = Vec::with_capacity(geometry.len());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { geometry, data }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geometry.spacing
    }

    pub fn orientation(&self) -> Orientation {
        self.geometry.orientation
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.data[self.geometry.index(i, j, k)]
    }

    /// Out-of-grid coordinates read as background.
    #[inline]
    pub fn get_signed(&self, i: isize, j: isize, k: isize) -> bool {
        let [nx, ny, nz] = self.geometry.dims;
        if i < 0 || j < 0 || k < 0 || i as usize >= nx || j as usize >= ny || k as usize >= nz {
            return false;
        }
        self.get(i as usize, j as usize, k as usize)
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: bool) {
        let idx = self.geometry.index(i, j, k);
        self.data[idx] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn voxel_volume_mm3(&self) -> f64 {
        self.geometry.spacing.iter().product()
    }

    /// Foreground voxel indices in storage order.
    pub fn foreground(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(idx, _)| self.geometry.coords(idx))
    }

    /// Inclusive voxel-index bounding box of the foreground, if any.
    pub fn bounding_box(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for c in self.foreground() {
            any = true;
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
        any.then_some((lo, hi))
    }
}

/// Integer label grid sharing [`Geometry`] with masks, plus a name table.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    geometry: Geometry,
    data: Vec<u32>,
    label_map: BTreeMap<u32, String>,
}

impl LabelVolume {
    pub fn new(geometry: Geometry, data: Vec<u32>, label_map: BTreeMap<u32, String>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::invalid(format!(
                "label data has {} voxels but dims {:?} need {}",
                data.len(),
                geometry.dims,
                geometry.len()
            )));
        }
        if let Some(bad) = data.iter().find(|&&l| l != 0 && !label_map.contains_key(&l)) {
            return Err(Error::invalid(format!("label {bad} missing from label map")));
        }
        Ok(Self {
            geometry,
            data,
            label_map,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }

    pub fn label_map(&self) -> &BTreeMap<u32, String> {
        &self.label_map
    }

    pub fn label_of(&self, name: &str) -> Option<u32> {
        self.label_map
            .iter()
            .find(|(_, n)| n.eq_ignore_ascii_case(name))
            .map(|(&l, _)| l)
    }

    /// Binary mask of one label.
    pub fn mask_of(&self, label: u32) -> VoxelMask {
        VoxelMask {
            geometry: self.geometry,
            data: self.data.iter().map(|&l| l == label).collect(),
        }
    }
}

/// Default anatomical names used by the label table.
pub mod anatomy {
    pub const PANCREAS: &str = "pancreas";
    pub const LIVER: &str = "liver";
    pub const SPLEEN: &str = "spleen";
    pub const KIDNEY_LEFT: &str = "kidney_left";
    pub const KIDNEY_RIGHT: &str = "kidney_right";
    pub const VERTEBRA_L5: &str = "vertebrae_L5";
    pub const VERTEBRA_T7: &str = "vertebrae_T7";
}
