//! Structural flags, bounding-box outliers and per-session scan selection.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::VoxelMask;

/// Organs compared during scan selection, in volume-column order.
pub const ORGANS: [&str; 5] = ["pancreas", "liver", "spleen", "kidney_left", "kidney_right"];

/// Outlier cutoff on the robust z of a log bounding-box ratio.
pub const DEFAULT_Z_THRESHOLD: f64 = 3.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QcFlags {
    pub multi_component: bool,
    pub touches_edge: bool,
    pub bbox_outlier: bool,
}

impl QcFlags {
    pub fn any(&self) -> bool {
        self.multi_component || self.touches_edge || self.bbox_outlier
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanQcRecord {
    pub session_id: String,
    pub scan_id: String,
    pub age_years: f64,
    /// Volumes in mm³, ordered as [`ORGANS`].
    pub volumes: [f64; 5],
    pub flags: QcFlags,
}

impl ScanQcRecord {
    pub fn new(session_id: &str, scan_id: &str, age_years: f64, volumes: [f64; 5]) -> Result<Self> {
        if !(0.0..=120.0).contains(&age_years) {
            return Err(Error::invalid(format!("age {age_years} outside [0, 120]")));
        }
        if volumes.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!("scan {scan_id}: volumes must be finite and non-negative")));
        }
        Ok(Self {
            session_id: session_id.to_string(),
            scan_id: scan_id.to_string(),
            age_years,
            volumes,
            flags: QcFlags::default(),
        })
    }
}

/// True iff a foreground voxel lies on any face of the grid.
pub fn edge_touch_flag(mask: &VoxelMask) -> bool {
    let [nx, ny, nz] = mask.geometry().dims;
    mask.foreground().any(|[i, j, k]| {
        i == 0 || j == 0 || k == 0 || i + 1 == nx || j + 1 == ny || k + 1 == nz
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Robust z-scores |x − median| / (1.4826·MAD) of one sample, or `None`
/// when the MAD is zero.
pub fn robust_z(values: &[f64]) -> Option<Vec<f64>> {
    let mut sorted = values.to_vec();
    let med = median(&mut sorted);
    let mut dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    let mad = median(&mut dev);
    if mad <= 0.0 {
        return None;
    }
    let scale = 1.4826 * mad;
    Some(values.iter().map(|v| (v - med).abs() / scale).collect())
}

/// Flags records whose log face ratios are out of distribution.
pub fn bbox_outlier_flags(ratios: &[[f64; 3]], z_threshold: f64) -> Result<Vec<bool>> {
    if ratios.len() < 10 {
        return Err(Error::invalid(format!(
            "bounding-box outlier detection needs at least 10 records, got {}",
            ratios.len()
        )));
    }
    if let Some(bad) = ratios.iter().position(|r| r.iter().any(|v| !(v.is_finite() && *v > 0.0))) {
        return Err(Error::invalid(format!("record {bad}: ratios must be positive")));
    }
    let mut flags = vec![false; ratios.len()];
    for c in 0..3 {
        let logs: Vec<f64> = ratios.iter().map(|r| r[c].ln()).collect();
        match robust_z(&logs) {
            Some(z) => {
                for (f, zi) in flags.iter_mut().zip(z) {
                    *f |= zi > z_threshold;
                }
            }
            None => warn!("bounding-box ratio component {c} has zero MAD; skipped"),
        }
    }
    Ok(flags)
}

/// Least-squares polynomial of organ volume against age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifespanPolynomial {
    pub organ: String,
    pub degree: usize,
    /// Ascending powers of age, in years.
    pub coefficients: Vec<f64>,
    pub residual_sd: f64,
    pub age_min: f64,
    pub age_max: f64,
    /// Ascending powers of (age − center) / scale; used for evaluation.
    pub standardized: Vec<f64>,
    pub center: f64,
    pub scale: f64,
}

impl LifespanPolynomial {
    pub fn evaluate(&self, age: f64) -> f64 {
        let t = (age - self.center) / self.scale;
        self.standardized.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }
}

/// Fits a polynomial by OLS on centered and scaled ages.
pub fn fit_lifespan_polynomial(organ: &str, points: &[(f64, f64)], degree: usize) -> Result<LifespanPolynomial> {
    fit_with_inverse_r(organ, points, degree).map(|(poly, _)| poly)
}

/// The fit plus R⁻¹ of the standardized design's QR, so that
/// (XᵀX)⁻¹ = R⁻¹R⁻ᵀ.
pub(crate) fn fit_with_inverse_r(
    organ: &str,
    points: &[(f64, f64)],
    degree: usize,
) -> Result<(LifespanPolynomial, DMatrix<f64>)> {
    if !(1..=6).contains(&degree) {
        return Err(Error::invalid(format!("polynomial degree must be 1..=6, got {degree}")));
    }
    let n = points.len();
    if n < degree + 2 {
        return Err(Error::invalid(format!(
            "degree {degree} fit needs at least {} points, got {n}",
            degree + 2
        )));
    }
    if points.iter().any(|(a, v)| !a.is_finite() || !v.is_finite()) {
        return Err(Error::invalid("non-finite point in polynomial fit"));
    }
    let age_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let age_max = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let center = points.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let scale = 0.5 * (age_max - age_min);
    if scale <= 0.0 {
        return Err(Error::Singular(format!("{organ}: all ages are equal")));
    }

    let p = degree + 1;
    let x = DMatrix::from_fn(n, p, |r, c| ((points[r].0 - center) / scale).powi(c as i32));
    let y = DVector::from_iterator(n, points.iter().map(|pt| pt.1));
    let qr = x.clone().qr();
    let r = qr.r();
    let rmax = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..p).any(|i| r[(i, i)].abs() <= 1e-10 * rmax) {
        return Err(Error::Singular(format!("{organ}: rank-deficient polynomial design")));
    }
    let qty = qr.q().transpose() * &y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Singular(format!("{organ}: triangular solve failed")))?;
    let resid = &y - &x * &beta;
    let residual_sd = (resid.norm_squared() / (n - p) as f64).sqrt();

    // expand sum_c b_c ((age - m)/s)^c into powers of age
    let mut coefficients = vec![0.0; p];
    for (c, b) in beta.iter().enumerate() {
        let factor = b / scale.powi(c as i32);
        for k in 0..=c {
            coefficients[k] += factor * binomial(c, k) * (-center).powi((c - k) as i32);
        }
    }

    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("{organ}: triangular inverse failed")))?;
    let poly = LifespanPolynomial {
        organ: organ.to_string(),
        degree,
        coefficients,
        residual_sd,
        age_min,
        age_max,
        standardized: beta.iter().copied().collect(),
        center,
        scale,
    };
    Ok((poly, r_inv))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Competition ranks (1-based, ties share the minimum rank).
pub fn min_ranks(values: &[f64]) -> Vec<usize> {
    values
        .iter()
        .map(|v| 1 + values.iter().filter(|w| w.total_cmp(v).is_lt()).count())
        .collect()
}

/// Picks, per session, the scan whose organ volumes sit closest to the
/// lifespan curves, summing per-organ ranks with equal weight.
pub fn select_scan_per_session(
    records: &[ScanQcRecord],
    polys: &[LifespanPolynomial],
) -> Result<BTreeMap<String, String>> {
    let mut ordered = Vec::with_capacity(ORGANS.len());
    for organ in ORGANS {
        let poly = polys
            .iter()
            .find(|p| p.organ == organ)
            .ok_or_else(|| Error::invalid(format!("no lifespan polynomial for {organ}")))?;
        ordered.push(poly);
    }

    let mut sessions: BTreeMap<&str, Vec<&ScanQcRecord>> = BTreeMap::new();
    for r in records {
        sessions.entry(r.session_id.as_str()).or_default().push(r);
    }

    let mut selected = BTreeMap::new();
    for (session, scans) in sessions {
        if scans.is_empty() {
            warn!("session {session} has no scans; skipped");
            continue;
        }
        let mut total = vec![0usize; scans.len()];
        for (o, poly) in ordered.iter().enumerate() {
            let resid: Vec<f64> = scans
                .iter()
                .map(|s| (s.volumes[o] - poly.evaluate(s.age_years)).abs())
                .collect();
            for (t, r) in total.iter_mut().zip(min_ranks(&resid)) {
                *t += r;
            }
        }
        let best = (0..scans.len())
            .min_by(|&a, &b| total[a].cmp(&total[b]).then_with(|| scans[a].scan_id.cmp(&scans[b].scan_id)))
            .expect("non-empty session");
        selected.insert(session.to_string(), scans[best].scan_id.clone());
    }
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Geometry, Orientation};

    fn grid(n: usize) -> Geometry {
        Geometry::new([n; 3], [1.0; 3], Orientation::LAS, [0.0; 3]).unwrap()
    }

    #[test]
    fn edge_touch_cases() {
        let centered = VoxelMask::from_fn(grid(7), |i, j, k| {
            (2..5).contains(&i) && (2..5).contains(&j) && (2..5).contains(&k)
        });
        assert!(!edge_touch_flag(&centered));
        let shifted = VoxelMask::from_fn(grid(7), |i, j, k| i < 3 && (2..5).contains(&j) && (2..5).contains(&k));
        assert!(edge_touch_flag(&shifted));
        let full = VoxelMask::from_fn(grid(3), |_, _, _| true);
        assert!(edge_touch_flag(&full));
        let far_face = VoxelMask::from_fn(grid(5), |i, j, k| i == 2 && j == 2 && k == 4);
        assert!(edge_touch_flag(&far_face));
    }

    #[test]
    fn single_tenfold_ratio_is_flagged() {
        let mut ratios = vec![[1.2, 0.8, 0.9]; 20];
        // perturb lightly so the MAD is non-zero
        for (i, r) in ratios.iter_mut().enumerate() {
            r[1] *= 1.0 + 0.01 * (i % 5) as f64;
        }
        ratios[7][1] *= 10.0;
        let flags = bbox_outlier_flags(&ratios, DEFAULT_Z_THRESHOLD).unwrap();
        let flagged: Vec<usize> = flags.iter().enumerate().filter(|(_, f)| **f).map(|(i, _)| i).collect();
        assert_eq!(flagged, vec![7]);
    }

    #[test]
    fn identical_ratios_have_no_flags() {
        let mut ratios = vec![[1.0, 2.0, 3.0]; 12];
        assert!(bbox_outlier_flags(&ratios, 3.5).unwrap().iter().all(|f| !f));
        // one record off in a zero-MAD component: still skipped
        ratios[3][0] = 10.0;
        assert!(bbox_outlier_flags(&ratios, 3.5).unwrap().iter().all(|f| !f));
        assert!(bbox_outlier_flags(&ratios[..9], 3.5).is_err());
    }

    #[test]
    fn cubic_is_recovered() {
        let truth = [5.0, -0.3, 0.02, -1e-4];
        let pts: Vec<(f64, f64)> = (0..30)
            .map(|i| {
                let a = 20.0 + 2.3 * i as f64;
                (a, truth.iter().rev().fold(0.0, |acc, c| acc * a + c))
            })
            .collect();
        let fit = fit_lifespan_polynomial("liver", &pts, 3).unwrap();
        for (c, t) in fit.coefficients.iter().zip(truth) {
            assert!((c - t).abs() < 1e-8 * t.abs().max(1.0), "{c} vs {t}");
        }
        let scale = pts.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
        assert!(fit.residual_sd < 1e-8 * scale);
        assert!((fit.evaluate(50.0) - truth.iter().rev().fold(0.0, |acc, c| acc * 50.0 + c)).abs() < 1e-9);
    }

    #[test]
    fn symmetric_abs_has_flat_slope() {
        let pts: Vec<(f64, f64)> = (0..=100).map(|a| (a as f64, (a as f64 - 50.0).abs())).collect();
        let fit = fit_lifespan_polynomial("spleen", &pts, 1).unwrap();
        assert!(fit.coefficients[1].abs() < 1e-10);
    }

    #[test]
    fn equal_ages_are_singular() {
        let pts = vec![(40.0, 1.0), (40.0, 2.0), (40.0, 3.0), (40.0, 4.0), (40.0, 5.0)];
        assert!(matches!(fit_lifespan_polynomial("x", &pts, 2), Err(Error::Singular(_))));
        assert!(fit_lifespan_polynomial("x", &pts[..3], 2).is_err());
    }

    #[test]
    fn min_ranks_share_ties() {
        assert_eq!(min_ranks(&[3.0, 1.0, 3.0, 0.5]), vec![3, 2, 3, 1]);
    }
}
