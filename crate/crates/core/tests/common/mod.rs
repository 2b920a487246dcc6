#![allow(dead_code)]

use morphspan_core::gamlss::Observation;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

pub const TRUE_DIABETES: f64 = -5.0;

pub fn true_mu(age: f64, diabetes: f64, sex: f64, weight: f64) -> f64 {
    60.0 + 8.0 * ((age - 20.0) / 70.0 * std::f64::consts::PI).sin() - 0.15 * (age - 55.0)
        + TRUE_DIABETES * diabetes
        + 0.3 * weight
        + 4.0 * sex
}

pub const TRUE_SIGMA: f64 = 0.15;
pub const TRUE_NU: f64 = 0.5;

/// Draws from the truncated-normal BCCG by rejection on z, independent of
/// the library's quantile function.
pub fn draw_bccg(rng: &mut impl Rng, mu: f64, sigma: f64, nu: f64) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        let base = 1.0 + nu * sigma * z;
        if base > 0.0 {
            return mu * base.powf(1.0 / nu);
        }
    }
}

pub fn simulate(seed: u64, n: usize) -> Vec<Observation> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    simulate_with(&mut rng, n)
}

pub fn simulate_with(rng: &mut impl Rng, n: usize) -> Vec<Observation> {
    (0..n)
        .map(|_| {
            let age: f64 = rng.random_range(20.0..90.0);
            let diabetes = if rng.random_bool(0.3) { 1.0 } else { 0.0 };
            let sex = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            let g: f64 = StandardNormal.sample(rng);
            let weight = (80.0 + 15.0 * g).clamp(40.0, 150.0);
            let mu = true_mu(age, diabetes, sex, weight);
            let y = draw_bccg(rng, mu, TRUE_SIGMA, TRUE_NU);
            morphspan_core::gamlss::Observation { age, diabetes, sex, weight, y }
        })
        .collect()
}

/// Adaptive Simpson quadrature.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    // split into panels so narrow peaks are not skipped
    let panels = 64;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (f0, f1, fm) = (f(x0), f(x1), f(0.5 * (x0 + x1)));
            let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
            step(f, x0, x1, f0, fm, f1, whole, tol / panels as f64, 50)
        })
        .sum()
}
