//! BCCG distributional regression with P-spline age effects.

pub mod bccg;
mod fit;
pub mod pspline;

pub use bccg::{bccg_cdf, bccg_logpdf, bccg_pdf, bccg_quantile, bccg_z, BccgParams};
pub use fit::{
    centiles, fit, wald_p, CentileCurve, CovariateSetting, FitConfig, GamlssFit, LinearTerms, Observation,
    ParameterModel, SplineTerm,
};
pub use pspline::{difference_matrix, fit_pspline, BSplineBasis, PSplineFit};
