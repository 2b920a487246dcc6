//! Box-Cox Cole-Green distribution with the normal truncated to the
//! support y > 0.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BccgParams {
    pub mu: f64,
    pub sigma: f64,
    pub nu: f64,
}

impl BccgParams {
    pub fn new(mu: f64, sigma: f64, nu: f64) -> Result<Self> {
        let p = Self { mu, sigma, nu };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid(format!("BCCG mu must be positive, got {}", self.mu)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("BCCG sigma must be positive, got {}", self.sigma)));
        }
        if !self.nu.is_finite() {
            return Err(Error::invalid("BCCG nu must be finite"));
        }
        Ok(())
    }

    /// Truncation point 1/(σ|ν|), infinite at ν = 0.
    pub fn truncation(&self) -> f64 {
        1.0 / (self.sigma * self.nu.abs())
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// Φ(x), accurate in both tails.
pub(crate) fn phi_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// ln Φ(x).
pub(crate) fn ln_phi_cdf(x: f64) -> f64 {
    if x.is_infinite() && x > 0.0 {
        0.0
    } else if x > -30.0 {
        phi_cdf(x).ln()
    } else {
        ln_phi_lower_tail(x)
    }
}

/// Mills-ratio asymptotic series for ln Φ(x), x ≪ 0.
fn ln_phi_lower_tail(x: f64) -> f64 {
    let u = 1.0 / (x * x);
    -0.5 * x * x - (-x).ln() - 0.5 * (2.0 * PI).ln() + (-u + 3.0 * u * u - 15.0 * u * u * u).ln_1p()
}

/// a·φ(a)/Φ(a), the truncation contribution to the σ score; 0 at a = ∞.
pub(crate) fn truncation_score(a: f64) -> f64 {
    if a.is_infinite() || a > 40.0 {
        0.0
    } else {
        a * std_normal().pdf(a) / phi_cdf(a)
    }
}

/// Standardized value z of y; continuous through ν = 0.
pub fn bccg_z(y: f64, p: &BccgParams) -> f64 {
    let l = (y / p.mu).ln();
    if p.nu == 0.0 {
        l / p.sigma
    } else {
        (p.nu * l).exp_m1() / (p.nu * p.sigma)
    }
}

/// ∂ log f / ∂ν for one observation.
pub(crate) fn nu_score(y: f64, p: &BccgParams) -> f64 {
    let l = (y / p.mu).ln();
    let x = p.nu * l;
    let z = bccg_z(y, p);
    // ∂z/∂ν = (x eˣ − (eˣ − 1)) / (ν²σ), expanded near x = 0
    let dz = if x.abs() < 1e-3 {
        l * l / p.sigma * (0.5 + x / 3.0 + x * x / 8.0)
    } else {
        (x * x.exp() - x.exp_m1()) / (p.nu * p.nu * p.sigma)
    };
    let trunc = if p.nu == 0.0 {
        0.0
    } else {
        let a = p.truncation();
        let mills = if a > 40.0 { 0.0 } else { std_normal().pdf(a) / phi_cdf(a) };
        -mills * p.nu.signum() / (p.sigma * p.nu * p.nu)
    };
    l - z * dz - trunc
}

fn check_y(y: f64) -> Result<()> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(Error::invalid(format!("BCCG response must be positive, got {y}")));
    }
    Ok(())
}

/// Log density. ν = 0 is the lognormal with log-scale mean ln μ.
pub fn bccg_logpdf(y: f64, p: &BccgParams) -> Result<f64> {
    p.validate()?;
    check_y(y)?;
    Ok(logpdf_unchecked(y, p))
}

pub(crate) fn logpdf_unchecked(y: f64, p: &BccgParams) -> f64 {
    let z = bccg_z(y, p);
    (p.nu - 1.0) * y.ln() - p.nu * p.mu.ln() - p.sigma.ln() - 0.5 * (2.0 * PI).ln() - 0.5 * z * z
        - ln_phi_cdf(p.truncation())
}

pub fn bccg_pdf(y: f64, p: &BccgParams) -> Result<f64> {
    bccg_logpdf(y, p).map(f64::exp)
}

/// Distribution function.
pub fn bccg_cdf(y: f64, p: &BccgParams) -> Result<f64> {
    p.validate()?;
    check_y(y)?;
    let z = bccg_z(y, p);
    let a = p.truncation();
    let f = match p.nu {
        nu if nu > 0.0 => (phi_cdf(z) - phi_cdf(-a)) / phi_cdf(a),
        nu if nu < 0.0 => phi_cdf(z) / phi_cdf(a),
        _ => phi_cdf(z),
    };
    Ok(f.clamp(0.0, 1.0))
}

/// Standard-normal deviate for level `prob` after truncation at ±1/(σ|ν|).
fn truncated_z(prob: f64, p: &BccgParams) -> f64 {
    let n = std_normal();
    let a = p.truncation();
    if p.nu == 0.0 || a.is_infinite() {
        return n.inverse_cdf(prob);
    }
    let pa = phi_cdf(a);
    // lower and upper tail probabilities of the untruncated normal at z_p
    let (lower, upper) = if p.nu > 0.0 {
        (phi_cdf(-a) + prob * pa, (1.0 - prob) * pa)
    } else {
        (prob * pa, (1.0 - prob) * pa + phi_cdf(-a))
    };
    if lower <= 0.5 {
        n.inverse_cdf(lower)
    } else {
        -n.inverse_cdf(upper)
    }
}

/// Quantile at level `prob` ∈ (0, 1).
pub fn bccg_quantile(prob: f64, p: &BccgParams) -> Result<f64> {
    p.validate()?;
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::invalid(format!("quantile level must lie in (0, 1), got {prob}")));
    }
    let z = truncated_z(prob, p);
    if p.nu == 0.0 {
        return Ok(p.mu * (p.sigma * z).exp());
    }
    let base = p.nu * p.sigma * z;
    if base <= -1.0 {
        return Err(Error::invalid(format!(
            "1 + nu*sigma*z = {} leaves the Box-Cox domain",
            1.0 + base
        )));
    }
    Ok(p.mu * (base.ln_1p() / p.nu).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nu_zero_is_lognormal() {
        let p = BccgParams::new(100.0, 0.2, 0.0).unwrap();
        for y in [50.0, 100.0, 130.0] {
            let l = (y / 100.0f64).ln();
            let lognormal = -y.ln() - 0.2f64.ln() - 0.5 * (2.0 * PI).ln() - l * l / (2.0 * 0.04);
            assert!((bccg_logpdf(y, &p).unwrap() - lognormal).abs() < 1e-12);
        }
    }

    #[test]
    fn median_point() {
        for nu in [-1.0, 0.0, 0.5, 2.0] {
            let p = BccgParams::new(80.0, 0.3, nu).unwrap();
            assert_eq!(bccg_z(80.0, &p), 0.0);
        }
        for (sigma, nu) in [(0.3, -0.3), (0.1, 1.0), (0.05, 2.0), (0.3, 0.0)] {
            let p = BccgParams::new(80.0, sigma, nu).unwrap();
            assert!((bccg_quantile(0.5, &p).unwrap() - 80.0).abs() < 1e-9);
        }
    }

    #[test]
    fn heavy_truncation_moves_the_median() {
        // a = 1/(σν) = 2.5: the median solves Φ(z) = Φ(−a) + Φ(a)/2
        let p = BccgParams::new(80.0, 0.2, 2.0).unwrap();
        let q = bccg_quantile(0.5, &p).unwrap();
        assert!(q > 80.0);
        assert!((bccg_cdf(q, &p).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn quantile_hand_values() {
        let p = BccgParams::new(100.0, 0.1, 1.0).unwrap();
        assert!((bccg_quantile(0.975, &p).unwrap() - 119.600).abs() < 1e-3);
        let p = BccgParams::new(100.0, 0.1, 0.0).unwrap();
        let level = phi_cdf(1.0);
        assert!((bccg_quantile(level, &p).unwrap() - 110.517).abs() < 1e-3);
    }

    #[test]
    fn continuity_in_nu() {
        let a = BccgParams::new(60.0, 0.25, 1e-8).unwrap();
        let b = BccgParams::new(60.0, 0.25, 0.0).unwrap();
        for y in [20.0, 60.0, 150.0] {
            assert!((bccg_logpdf(y, &a).unwrap() - bccg_logpdf(y, &b).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn nu_score_matches_finite_difference() {
        for (sigma, nu) in [(0.15, 0.5), (0.3, -1.2), (0.2, 0.0), (0.4, 2.5), (0.1, 1e-5)] {
            for y in [40.0, 60.0, 95.0] {
                let p = BccgParams::new(60.0, sigma, nu).unwrap();
                let h = 1e-6;
                let up = logpdf_unchecked(y, &BccgParams { nu: nu + h, ..p });
                let dn = logpdf_unchecked(y, &BccgParams { nu: nu - h, ..p });
                let fd = (up - dn) / (2.0 * h);
                assert!((nu_score(y, &p) - fd).abs() < 1e-6 * fd.abs().max(1.0), "{sigma} {nu} {y}");
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let p = BccgParams { mu: 1.0, sigma: 0.1, nu: 0.5 };
        assert!(bccg_logpdf(0.0, &p).is_err());
        assert!(BccgParams::new(-1.0, 0.1, 0.0).is_err());
        assert!(BccgParams::new(1.0, 0.0, 0.0).is_err());
        assert!(bccg_quantile(1.0, &p).is_err());
    }

    #[test]
    fn ln_phi_tail_is_smooth() {
        for x in [-30.0, -32.0, -35.0] {
            let direct = phi_cdf(x).ln();
            assert!((ln_phi_lower_tail(x) - direct).abs() < 1e-9 * direct.abs());
        }
    }
}
