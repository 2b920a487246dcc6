//! FDR correction, grouped boxplot summaries and polynomial trend bands.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::cohort::Sex;
use crate::error::{Error, Result};
use crate::qc::{fit_with_inverse_r, LifespanPolynomial};

/// Significance level for the `significant` column.
pub const ALPHA: f64 = 0.05;

/// Benjamini-Hochberg step-up adjustment, returned in input order.
pub fn bh_adjust(pvalues: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("p-value {bad} outside [0, 1]")));
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (pos, &i) in order.iter().enumerate().rev() {
        let rank = pos + 1;
        running = running.min(pvalues[i] * (m as f64 / rank as f64));
        adjusted[i] = running.min(1.0);
    }
    Ok(adjusted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueRow {
    pub feature: String,
    pub coefficient: Option<f64>,
    pub se: Option<f64>,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub significant: bool,
}

/// Adjusts named p-values; rows keep the input order.
pub fn bh_fdr(pvalues: &[(String, f64)]) -> Result<Vec<PValueRow>> {
    let rows: Vec<(String, Option<f64>, Option<f64>, f64)> =
        pvalues.iter().map(|(n, p)| (n.clone(), None, None, *p)).collect();
    pvalue_table(&rows)
}

/// Like [`bh_fdr`], carrying each row's coefficient and standard error.
pub fn pvalue_table(rows: &[(String, Option<f64>, Option<f64>, f64)]) -> Result<Vec<PValueRow>> {
    let raw: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let adjusted = bh_adjust(&raw)?;
    Ok(rows
        .iter()
        .zip(adjusted)
        .map(|((feature, coefficient, se, p), q)| PValueRow {
            feature: feature.clone(),
            coefficient: *coefficient,
            se: *se,
            p_raw: *p,
            p_adjusted: q,
            significant: q < ALPHA,
        })
        .collect())
}

/// Sample quantile by linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending and nonempty.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Age group label: decades 0-9 … 70-79, then a terminal 80-90 bin that
/// also takes any older age.
pub fn decade_label(age: f64) -> String {
    let d = ((age / 10.0).floor() as i64).clamp(0, 8);
    if d == 8 {
        "80-90".to_string()
    } else {
        format!("{}-{}", d * 10, d * 10 + 9)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub sex: Sex,
    /// Decade label, or "all" without decade binning.
    pub age_group: String,
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Tukey boxplot summary of one sample.
pub fn summarize(sex: Sex, age_group: &str, values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::invalid("cannot summarize an empty group"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in boxplot group"));
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let q1 = quantile_type7(&v, 0.25);
    let median = quantile_type7(&v, 0.5);
    let q3 = quantile_type7(&v, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|x| *x >= lo_fence && *x <= hi_fence).collect();
    let outliers = v.iter().copied().filter(|x| *x < lo_fence || *x > hi_fence).collect();
    Ok(BoxStats {
        sex,
        age_group: age_group.to_string(),
        n: v.len(),
        median,
        q1,
        q3,
        whisker_low: inside[0],
        whisker_high: inside[inside.len() - 1],
        outliers,
    })
}

/// Boxplot summaries by sex and, optionally, age decade. Groups come out
/// sorted by sex then age; empty groups are omitted.
pub fn box_stats(values: &[(Sex, f64, f64)], decade_bins: bool) -> Result<Vec<BoxStats>> {
    if values.is_empty() {
        return Err(Error::invalid("box_stats needs at least one value"));
    }
    let mut groups: BTreeMap<(Sex, i64), Vec<f64>> = BTreeMap::new();
    for &(sex, age, x) in values {
        let key = if decade_bins {
            ((age / 10.0).floor() as i64).clamp(0, 8)
        } else {
            -1
        };
        groups.entry((sex, key)).or_default().push(x);
    }
    groups
        .into_iter()
        .map(|((sex, key), xs)| {
            let label = if key < 0 {
                "all".to_string()
            } else {
                decade_label(key as f64 * 10.0)
            };
            summarize(sex, &label, &xs)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendBand {
    pub polynomial: LifespanPolynomial,
    pub ages: Vec<f64>,
    pub fit: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Polynomial trend with a pointwise 95 % confidence band for the mean.
pub fn trend_with_band(points: &[(f64, f64)], degree: usize, grid: &[f64]) -> Result<TrendBand> {
    let (poly, r_inv) = fit_with_inverse_r("trend", points, degree)?;
    let df = (points.len() - degree - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::invalid(format!("t distribution: {e}")))?
        .inverse_cdf(0.975);
    let mut fit = Vec::with_capacity(grid.len());
    let mut lower = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    for &age in grid {
        let u = (age - poly.center) / poly.scale;
        let x0 = DVector::from_fn(degree + 1, |c, _| u.powi(c as i32));
        // se² = σ² x0ᵀ R⁻¹ R⁻ᵀ x0
        let w = r_inv.transpose() * &x0;
        let se = poly.residual_sd * w.norm();
        let y = poly.evaluate(age);
        fit.push(y);
        lower.push(y - t * se);
        upper.push(y + t * se);
    }
    Ok(TrendBand {
        polynomial: poly,
        ages: grid.to_vec(),
        fit,
        lower,
        upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bh_hand_cases() {
        assert_eq!(bh_adjust(&[0.2]).unwrap(), vec![0.2]);
        let adj = bh_adjust(&[0.01, 0.02, 0.03]).unwrap();
        for a in adj {
            assert!((a - 0.03).abs() < 1e-15);
        }
        assert!(bh_adjust(&[0.5, 1.2]).is_err());
        assert_eq!(bh_adjust(&[0.04; 4]).unwrap(), vec![0.04; 4]);
        assert_eq!(bh_adjust(&[0.9, 0.8]).unwrap(), vec![0.9, 0.9]);
    }

    #[test]
    fn type7_quartiles_of_1_to_100() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let b = summarize(Sex::F, "all", &v).unwrap();
        assert_eq!(b.median, 50.5);
        assert_eq!(b.q1, 25.75);
        assert_eq!(b.q3, 75.25);
        assert!(b.outliers.is_empty());
        assert_eq!((b.whisker_low, b.whisker_high), (1.0, 100.0));
    }

    #[test]
    fn constant_and_extreme_groups() {
        let b = summarize(Sex::M, "all", &[3.0; 7]).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (3.0, 3.0, 3.0));
        assert!(b.outliers.is_empty());
        let mut v: Vec<f64> = (0..20).map(f64::from).collect();
        let b = summarize(Sex::M, "all", &v).unwrap();
        let iqr = b.q3 - b.q1;
        v.push(b.q3 + 10.0 * iqr);
        let b2 = summarize(Sex::M, "all", &v).unwrap();
        assert_eq!(b2.outliers, vec![b.q3 + 10.0 * iqr]);
        assert_eq!(b2.whisker_high, 19.0);
    }

    #[test]
    fn decade_groups() {
        assert_eq!(decade_label(0.0), "0-9");
        assert_eq!(decade_label(79.99), "70-79");
        assert_eq!(decade_label(85.0), "80-90");
        assert_eq!(decade_label(97.0), "80-90");
        let vals = vec![(Sex::F, 23.0, 1.0), (Sex::F, 27.0, 2.0), (Sex::M, 81.0, 3.0), (Sex::F, 64.0, 4.0)];
        let groups = box_stats(&vals, true).unwrap();
        let keys: Vec<(Sex, &str, usize)> = groups.iter().map(|g| (g.sex, g.age_group.as_str(), g.n)).collect();
        assert_eq!(keys, vec![(Sex::M, "80-90", 1), (Sex::F, "20-29", 2), (Sex::F, "60-69", 1)]);
        assert_eq!(box_stats(&vals, false).unwrap().len(), 2);
    }

    #[test]
    fn noiseless_trend_has_zero_band() {
        let pts: Vec<(f64, f64)> = (0..40).map(|i| {
            let a = 20.0 + i as f64 * 1.5;
            (a, 3.0 - 0.2 * a + 0.01 * a * a)
        }).collect();
        let band = trend_with_band(&pts, 2, &[30.0, 50.0, 70.0]).unwrap();
        for ((lo, hi), f) in band.lower.iter().zip(&band.upper).zip(&band.fit) {
            assert!(hi - lo < 1e-8 * f.abs().max(1.0));
        }
    }

    #[test]
    fn minimal_sample_gives_finite_band() {
        let pts = vec![(20.0, 1.0), (40.0, 3.0), (60.0, 2.0), (80.0, 5.0)];
        let band = trend_with_band(&pts, 2, &[50.0]).unwrap();
        assert!(band.lower[0].is_finite() && band.upper[0].is_finite());
        assert!(band.upper[0] > band.lower[0]);
    }
}
