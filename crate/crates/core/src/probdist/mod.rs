//! Chi-square distributions and parametric residual density fits.

mod chisq;
mod families;

pub use chisq::{
    chi_sq_cdf, chi_sq_pdf, chi_sq_quantile, chi_sq_sf, noncentral_chi_sq_cdf, noncentral_chi_sq_pdf,
};
pub use families::{density_deriv_at_zero, mle_fit, DensityFamily, FamilyKind, FitResult};
