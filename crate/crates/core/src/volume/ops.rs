use super::{Geometry, LabelVolume, Orientation, VoxelMask};
use crate::error::{Error, Result};

/// Reorders axes (permutation plus flips) so the grid is LAS. Physical
/// positions of every voxel are preserved.
pub fn canonicalize_las(mask: &VoxelMask) -> Result<VoxelMask> {
    let (geometry, data) = reorient(mask.geometry(), mask.data(), Orientation::LAS);
    VoxelMask::new(geometry, data)
}

/// Label-volume counterpart of [`canonicalize_las`].
pub fn canonicalize_labels_las(labels: &LabelVolume) -> Result<LabelVolume> {
    let (geometry, data) = reorient(labels.geometry(), labels.data(), Orientation::LAS);
    LabelVolume::new(geometry, data, labels.label_map().clone())
}

fn reorient<T: Copy>(src: &Geometry, data: &[T], target: Orientation) -> (Geometry, Vec<T>) {
    // For each target axis: the source axis feeding it and whether it flips.
    let mut from = [0usize; 3];
    let mut flip = [false; 3];
    for (t, dir) in target.0.iter().enumerate() {
        let s = src.orientation.voxel_axis_of(dir.world_axis);
        from[t] = s;
        flip[t] = src.orientation.0[s].positive != dir.positive;
    }
    let dims = [src.dims[from[0]], src.dims[from[1]], src.dims[from[2]]];
    let spacing = [
        src.spacing[from[0]],
        src.spacing[from[1]],
        src.spacing[from[2]],
    ];
    let src_index = |u: [usize; 3]| {
        let mut s = [0usize; 3];
        for t in 0..3 {
            s[from[t]] = if flip[t] { dims[t] - 1 - u[t] } else { u[t] };
        }
        s
    };
    let s0 = src_index([0, 0, 0]);
    let origin = src.world([s0[0] as f64, s0[1] as f64, s0[2] as f64]);
    let geometry = Geometry {
        dims,
        spacing,
        orientation: target,
        origin,
    };
    let mut out = Vec::with_capacity(data.len());
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let s = src_index([i, j, k]);
                out.push(data[src.index(s[0], s[1], s[2])]);
            }
        }
    }
    (geometry, out)
}

/// Nearest-neighbour resampling onto an isotropic grid of `target_mm`
/// covering the input's physical extent. Orientation is kept.
pub fn resample_isotropic(mask: &VoxelMask, target_mm: f64) -> Result<VoxelMask> {
    if !(target_mm.is_finite() && target_mm > 0.0) {
        return Err(Error::invalid(format!("target spacing {target_mm} must be positive")));
    }
    let src = mask.geometry();
    let mut dims = [0usize; 3];
    // Per output axis: source index for every output position (None = outside).
    let mut lookup: [Vec<Option<usize>>; 3] = Default::default();
    let mut start = [0.0; 3];
    for a in 0..3 {
        let extent = src.dims[a] as f64 * src.spacing[a];
        let n = (extent / target_mm - 1e-9).ceil().max(1.0) as usize;
        if n < 2 {
            return Err(Error::Degenerate(format!(
                "resampling axis {a} ({extent} mm) at {target_mm} mm leaves {n} voxel"
            )));
        }
        dims[a] = n;
        let margin = (n as f64 * target_mm - extent) / 2.0;
        let to_src = |j: usize| -0.5 + (-margin + (j as f64 + 0.5) * target_mm) / src.spacing[a];
        start[a] = to_src(0);
        lookup[a] = (0..n)
            .map(|j| {
                let u = (to_src(j) + 0.5).floor();
                (u >= 0.0 && (u as usize) < src.dims[a]).then_some(u as usize)
            })
            .collect();
    }
    let geometry = Geometry::new(dims, [target_mm; 3], src.orientation, src.world(start))?;
    let mut data = Vec::with_capacity(geometry.len());
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let v = match (lookup[0][i], lookup[1][j], lookup[2][k]) {
                    (Some(si), Some(sj), Some(sk)) => mask.get(si, sj, sk),
                    _ => false,
                };
                data.push(v);
            }
        }
    }
    VoxelMask::new(geometry, data)
}

/// Outcome of [`crop_between_vertebrae`].
#[derive(Debug, Clone)]
pub struct CropResult {
    pub mask: VoxelMask,
    /// Inclusive retained slice range along the inferior-superior voxel axis,
    /// in input indices. `None` when the landmarks do not overlap.
    pub slice_range: Option<(usize, usize)>,
    /// No foreground left after cropping.
    pub empty: bool,
}

/// Keeps the slices from the inferior extent of `lower` to the superior
/// extent of `upper` (inclusive) along the inferior-superior axis.
pub fn crop_between_vertebrae(
    mask: &VoxelMask,
    labels: &LabelVolume,
    lower: &str,
    upper: &str,
) -> Result<CropResult> {
    let g = mask.geometry();
    let lg = labels.geometry();
    let same = g.dims == lg.dims
        && g.orientation == lg.orientation
        && (0..3).all(|a| {
            (g.spacing[a] - lg.spacing[a]).abs() < 1e-4 && (g.origin[a] - lg.origin[a]).abs() < 1e-3
        });
    if !same {
        return Err(Error::invalid("mask and label volume geometries differ"));
    }
    let lower_label = labels
        .label_of(lower)
        .ok_or_else(|| Error::MissingLandmark(lower.to_string()))?;
    let upper_label = labels
        .label_of(upper)
        .ok_or_else(|| Error::MissingLandmark(upper.to_string()))?;

    let si_axis = g.orientation.voxel_axis_of(2);
    let superior_up = g.orientation.0[si_axis].positive;
    let slices_of = |label: u32| -> Option<(usize, usize)> {
        let mut range: Option<(usize, usize)> = None;
        for (idx, &l) in labels.data().iter().enumerate() {
            if l == label {
                let s = lg.coords(idx)[si_axis];
                range = Some(match range {
                    None => (s, s),
                    Some((lo, hi)) => (lo.min(s), hi.max(s)),
                });
            }
        }
        range
    };
    let lower_slices = slices_of(lower_label).ok_or_else(|| Error::MissingLandmark(lower.to_string()))?;
    let upper_slices = slices_of(upper_label).ok_or_else(|| Error::MissingLandmark(upper.to_string()))?;

    // Inferior extent of the lower vertebra and superior extent of the upper
    // one, as slice indices.
    let (inferior, superior) = if superior_up {
        (lower_slices.0, upper_slices.1)
    } else {
        (lower_slices.1, upper_slices.0)
    };
    let range = if superior_up {
        (inferior <= superior).then_some((inferior, superior))
    } else {
        (superior <= inferior).then_some((superior, inferior))
    };

    let Some((lo, hi)) = range else {
        let cropped = VoxelMask::empty(*g);
        return Ok(CropResult {
            mask: cropped,
            slice_range: None,
            empty: true,
        });
    };
    let mut dims = g.dims;
    dims[si_axis] = hi - lo + 1;
    let mut start = [0.0; 3];
    start[si_axis] = lo as f64;
    let geometry = Geometry::new(dims, g.spacing, g.orientation, g.world(start))?;
    let cropped = VoxelMask::from_fn(geometry, |i, j, k| {
        let mut c = [i, j, k];
        c[si_axis] += lo;
        mask.get(c[0], c[1], c[2])
    });
    let empty = cropped.count() == 0;
    Ok(CropResult {
        mask: cropped,
        slice_range: Some((lo, hi)),
        empty,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, BTreeSet};

    use super::*;

    fn l_shape(orientation: Orientation) -> VoxelMask {
        let g = Geometry::new([6, 5, 4], [1.0, 2.0, 3.0], orientation, [5.0, -3.0, 12.0]).unwrap();
        VoxelMask::from_fn(g, |i, j, k| (i < 4 && j == 0 && k == 0) || (i == 0 && j < 3 && k < 2))
    }

    fn physical_set(mask: &VoxelMask) -> BTreeSet<[i64; 3]> {
        mask.foreground()
            .map(|c| {
                let p = mask
                    .geometry()
                    .world([c[0] as f64, c[1] as f64, c[2] as f64]);
                // micrometre lattice; every coordinate here is a multiple of 0.5 mm
                p.map(|v| (v * 1e6).round() as i64)
            })
            .collect()
    }

    #[test]
    fn las_input_is_unchanged() {
        let m = l_shape(Orientation::LAS);
        assert_eq!(canonicalize_las(&m).unwrap(), m);
    }

    #[test]
    fn canonicalization_preserves_physical_coordinates() {
        for code in ["RAS", "LPI", "SAR", "PIR", "ILA", "RPS"] {
            let m = l_shape(code.parse().unwrap());
            let c = canonicalize_las(&m).unwrap();
            assert_eq!(c.orientation(), Orientation::LAS);
            assert_eq!(c.count(), m.count());
            assert_eq!(physical_set(&c), physical_set(&m), "{code}");
            let vol = |v: &VoxelMask| v.count() as f64 * v.voxel_volume_mm3();
            assert_eq!(vol(&c), vol(&m));
        }
    }

    #[test]
    fn resample_identity_at_native_spacing() {
        let g = Geometry::new([7, 8, 9], [3.0; 3], Orientation::LAS, [1.0, 2.0, 3.0]).unwrap();
        let m = VoxelMask::from_fn(g, |i, j, k| (i + 2 * j + k) % 3 == 0);
        let r = resample_isotropic(&m, 3.0).unwrap();
        assert_eq!(r.data(), m.data());
        assert_eq!(r.dims(), m.dims());
        for a in 0..3 {
            assert!((r.geometry().origin[a] - m.geometry().origin[a]).abs() < 1e-9);
        }
    }

    #[test]
    fn resample_rejects_collapse() {
        let g = Geometry::new([4, 4, 4], [1.0; 3], Orientation::LAS, [0.0; 3]).unwrap();
        let m = VoxelMask::empty(g);
        assert!(matches!(resample_isotropic(&m, 4.5), Err(Error::Degenerate(_))));
        assert!(resample_isotropic(&m, 3.0).is_ok());
        assert!(resample_isotropic(&m, 0.0).is_err());
    }

    fn vertebra_stack(mask_slices: std::ops::Range<usize>) -> (VoxelMask, LabelVolume) {
        let g = Geometry::new([3, 3, 20], [1.0; 3], Orientation::LAS, [0.0; 3]).unwrap();
        let mut labels = vec![0u32; g.len()];
        for k in 0..20 {
            let l = match k {
                2..=4 => 1,   // L5
                14..=16 => 2, // T7
                _ => 0,
            };
            for j in 0..3 {
                for i in 0..3 {
                    if i == 0 {
                        labels[g.index(i, j, k)] = l;
                    }
                }
            }
        }
        let map = BTreeMap::from([(1, "vertebrae_L5".into()), (2, "vertebrae_T7".into())]);
        let labels = LabelVolume::new(g, labels, map).unwrap();
        let mask = VoxelMask::from_fn(g, |i, _, k| i == 1 && mask_slices.contains(&k));
        (mask, labels)
    }

    #[test]
    fn crop_keeps_hand_computed_slice_range() {
        let (mask, labels) = vertebra_stack(5..10);
        let r = crop_between_vertebrae(&mask, &labels, "vertebrae_L5", "vertebrae_T7").unwrap();
        assert_eq!(r.slice_range, Some((2, 16)));
        assert_eq!(r.mask.dims(), [3, 3, 15]);
        assert_eq!(r.mask.count(), mask.count());
        assert!(!r.empty);
        assert!((r.mask.geometry().origin[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn crop_above_upper_vertebra_is_empty() {
        let (mask, labels) = vertebra_stack(17..20);
        let r = crop_between_vertebrae(&mask, &labels, "vertebrae_L5", "vertebrae_T7").unwrap();
        assert_eq!(r.mask.count(), 0);
        assert!(r.empty);
    }

    #[test]
    fn crop_reports_missing_landmark() {
        let (mask, labels) = vertebra_stack(5..10);
        assert!(matches!(
            crop_between_vertebrae(&mask, &labels, "vertebrae_L4", "vertebrae_T7"),
            Err(Error::MissingLandmark(_))
        ));
    }

    #[test]
    fn crop_handles_inferior_pointing_axis() {
        let (mask, labels) = vertebra_stack(5..10);
        // Same anatomy stored with the slice axis flipped (LAI).
        let lai: Orientation = "LAI".parse().unwrap();
        let (g, d) = reorient(mask.geometry(), mask.data(), lai);
        let mask = VoxelMask::new(g, d).unwrap();
        let (lg, ld) = reorient(labels.geometry(), labels.data(), lai);
        let labels = LabelVolume::new(lg, ld, labels.label_map().clone()).unwrap();
        let r = crop_between_vertebrae(&mask, &labels, "vertebrae_L5", "vertebrae_T7").unwrap();
        assert_eq!(r.slice_range, Some((3, 17)));
        assert_eq!(r.mask.count(), mask.count());
    }
}
