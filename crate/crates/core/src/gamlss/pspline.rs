//! Uniform B-spline bases with difference penalties.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// B-spline basis on equally spaced knots spanning `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    pub knots: Vec<f64>,
    pub degree: usize,
    pub lower: f64,
    pub upper: f64,
}

impl BSplineBasis {
    pub fn uniform(lower: f64, upper: f64, n_basis: usize, degree: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && upper > lower) {
            return Err(Error::invalid(format!("spline domain [{lower}, {upper}] is empty")));
        }
        if n_basis < degree + 1 {
            return Err(Error::invalid(format!(
                "a degree-{degree} basis needs at least {} functions, got {n_basis}",
                degree + 1
            )));
        }
        let segments = n_basis - degree;
        let h = (upper - lower) / segments as f64;
        let knots = (0..n_basis + degree + 1)
            .map(|j| lower + (j as f64 - degree as f64) * h)
            .collect();
        Ok(Self {
            knots,
            degree,
            lower,
            upper,
        })
    }

    pub fn n_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn contains(&self, x: f64) -> bool {
        let tol = 1e-9 * (self.upper - self.lower);
        x >= self.lower - tol && x <= self.upper + tol
    }

    /// Values of all basis functions at `x` (clamped into the domain).
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let p = self.degree;
        let k = self.n_basis();
        let x = x.clamp(self.lower, self.upper);
        let t = &self.knots;
        // knot span with t[span] <= x < t[span + 1], the last span closed
        let mut span = p;
        while span < k - 1 && x >= t[span + 1] {
            span += 1;
        }
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        let mut out = vec![0.0; k];
        for (r, v) in n.into_iter().enumerate() {
            out[span - p + r] = v;
        }
        out
    }

    pub fn design(&self, xs: &[f64]) -> DMatrix<f64> {
        let k = self.n_basis();
        let mut b = DMatrix::zeros(xs.len(), k);
        for (i, &x) in xs.iter().enumerate() {
            for (j, v) in self.eval(x).into_iter().enumerate() {
                b[(i, j)] = v;
            }
        }
        b
    }
}

/// Difference operator of the given order, (k − order) × k.
pub fn difference_matrix(k: usize, order: usize) -> DMatrix<f64> {
    let mut d = DMatrix::<f64>::identity(k, k);
    for _ in 0..order {
        let rows = d.nrows() - 1;
        d = DMatrix::from_fn(rows, k, |r, c| d[(r + 1, c)] - d[(r, c)]);
    }
    d
}

/// Penalized least-squares spline fit of y on x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PSplineFit {
    pub basis: BSplineBasis,
    pub coefs: Vec<f64>,
    pub lambda: f64,
    pub edf: f64,
}

impl PSplineFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.basis.eval(x).iter().zip(&self.coefs).map(|(b, c)| b * c).sum()
    }
}

/// Minimizes ‖y − Bα‖² + λ‖Dα‖² with a cubic basis and second-order
/// penalty. Solved by SVD of the stacked system, so λ = 0 with more basis
/// functions than points gives the minimum-norm interpolant.
pub fn fit_pspline(x: &[f64], y: &[f64], n_basis: usize, lambda: f64) -> Result<PSplineFit> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::invalid("x and y must be nonempty and of equal length"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    let lower = x.iter().copied().fold(f64::INFINITY, f64::min);
    let upper = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let basis = BSplineBasis::uniform(lower, upper, n_basis, 3)?;
    let b = basis.design(x);
    let d = difference_matrix(n_basis, 2) * lambda.sqrt();
    let n = x.len();
    let rows = n + d.nrows();
    let mut a = DMatrix::zeros(rows, n_basis);
    a.view_mut((0, 0), (n, n_basis)).copy_from(&b);
    a.view_mut((n, 0), (d.nrows(), n_basis)).copy_from(&d);
    let mut rhs = DVector::zeros(rows);
    rhs.rows_mut(0, n).copy_from(&DVector::from_column_slice(y));

    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let coefs = svd
        .solve(&rhs, 1e-13 * smax)
        .map_err(|e| Error::Singular(format!("P-spline solve: {e}")))?;

    // edf = tr(B (BᵀB + λDᵀD)⁺ Bᵀ)
    let gram = a.transpose() * &a;
    let pinv = gram
        .pseudo_inverse(1e-13 * smax * smax)
        .map_err(|e| Error::Singular(format!("P-spline edf: {e}")))?;
    let edf = (&b * pinv * b.transpose()).trace();

    Ok(PSplineFit {
        basis,
        coefs: coefs.iter().copied().collect(),
        lambda,
        edf,
    })
}
