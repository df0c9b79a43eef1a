//! Chi-square tests of `H0: beta = beta0` built on the SEE.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bandwidth::{estimate_moments, plugin_bandwidth_with_fit};
use crate::error::{Result, SeeError};
use crate::estimator::{see_moments, tiny_bandwidth, SolverOptions, HUGE_H};
use crate::instruments::Dataset;
use crate::kernels::SmoothingKernel;
use crate::linalg::{second_moment, spd_solve};
use crate::probdist::{chi_sq_pdf, chi_sq_quantile, chi_sq_sf, noncentral_chi_sq_pdf};

/// How the bandwidth of a fit or test is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthChoice {
    Plugin,
    Fixed(f64),
    /// `0.01 * range(residuals) / n` of the plug-in fit.
    Tiny,
    /// `5e6`.
    Huge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalValues {
    pub c_alpha: f64,
    pub c_alpha_star: f64,
    pub c_plus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub s_n: f64,
    pub d: usize,
    pub alpha: f64,
    pub c_alpha: f64,
    pub c_alpha_star: f64,
    pub reject_first_order: bool,
    pub reject_corrected: bool,
    /// First-order chi-square p-value.
    pub p_value: f64,
    pub h: f64,
    pub c_plus: f64,
}

/// `q(1-q) n^{-1} sum Z Z'`.
pub fn v_hat(data: &Dataset) -> Result<DMatrix<f64>> {
    let v = second_moment(&data.z) * (data.q * (1.0 - data.q));
    if v.clone().cholesky().is_none() {
        return Err(SeeError::SingularMatrix("V hat".into()));
    }
    Ok(v)
}

/// `m_n(beta0)' V^{-1} m_n(beta0)`.
pub fn s_statistic(beta0: &DVector<f64>, data: &Dataset, h: f64, kernel: &SmoothingKernel) -> Result<f64> {
    if beta0.len() != data.d() {
        return Err(SeeError::DimensionMismatch(format!("beta0 has {} entries, expected {}", beta0.len(), data.d())));
    }
    if !(h > 0.0) {
        return Err(SeeError::Domain(format!("bandwidth must be positive, got {h}")));
    }
    let m = see_moments(beta0, data, h, kernel);
    let v = v_hat(data)?;
    let x = spd_solve(&v, &m, "V hat")?;
    Ok(m.dot(&x).max(0.0))
}

/// First-order and corrected critical values.
///
/// `c* = c - [g_{d+2}(c) / g_d(c)] C+ h` with `C+ = (1 - 1/(2r)) tr_AA`.
pub fn corrected_critical_value(alpha: f64, d: usize, r: usize, tr_aa: f64, h_star: f64) -> Result<CriticalValues> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SeeError::Domain(format!("alpha must be in (0, 1), got {alpha}")));
    }
    if !(tr_aa >= 0.0 && h_star >= 0.0) {
        return Err(SeeError::Domain("tr_AA and h must be nonnegative".into()));
    }
    let c_alpha = chi_sq_quantile(1.0 - alpha, d as u32)?;
    let c_plus = (1.0 - 1.0 / (2.0 * r as f64)) * tr_aa;
    let ratio = chi_sq_pdf(c_alpha, d as f64 + 2.0) / chi_sq_pdf(c_alpha, d as f64);
    Ok(CriticalValues { c_alpha, c_alpha_star: c_alpha - ratio * c_plus * h_star, c_plus })
}

/// Coefficient on the bandwidth in the size-adjusted local power expansion.
pub fn q_power(c_alpha: f64, tau_sq: f64, r: usize, d: usize) -> f64 {
    let d32 = d as u32;
    let g = |k: u32, lambda: f64| noncentral_chi_sq_pdf(c_alpha, k, lambda);
    let factor = 1.0 - 1.0 / (2.0 * r as f64);
    factor * (g(d32, tau_sq) * g(d32 + 2, 0.0) / g(d32, 0.0) - g(d32 + 2, tau_sq))
        - tau_sq / d as f64 * (g(d32 + 4, tau_sq) - g(d32 + 2, tau_sq))
}

/// Full test: bandwidth, statistic, both critical values and decisions.
///
/// `tr E(AA')` comes from the plug-in density fit; the correction uses the bandwidth actually
/// used by the statistic.
pub fn run_test(
    data: &Dataset,
    beta0: &DVector<f64>,
    alpha: f64,
    kernel: &SmoothingKernel,
    choice: BandwidthChoice,
    opts: &SolverOptions,
) -> Result<TestResult> {
    let (report, initial) = plugin_bandwidth_with_fit(data, kernel, opts)?;
    let h = match choice {
        BandwidthChoice::Plugin => report.selected,
        BandwidthChoice::Fixed(h) => h,
        BandwidthChoice::Tiny => tiny_bandwidth(&initial.residuals),
        BandwidthChoice::Huge => HUGE_H,
    };
    let moments = estimate_moments(data, report.selected_fit(), kernel)?;
    test_with(data, beta0, alpha, kernel, h, moments.tr_aa)
}

/// Test at a given bandwidth with a known `tr E(AA')`.
pub fn test_with(
    data: &Dataset,
    beta0: &DVector<f64>,
    alpha: f64,
    kernel: &SmoothingKernel,
    h: f64,
    tr_aa: f64,
) -> Result<TestResult> {
    let d = data.d();
    let s_n = s_statistic(beta0, data, h, kernel)?;
    let cv = corrected_critical_value(alpha, d, kernel.order(), tr_aa, h)?;
    Ok(TestResult {
        s_n,
        d,
        alpha,
        c_alpha: cv.c_alpha,
        c_alpha_star: cv.c_alpha_star,
        reject_first_order: s_n > cv.c_alpha,
        reject_corrected: s_n > cv.c_alpha_star,
        p_value: chi_sq_sf(s_n, d as u32)?,
        h,
        c_plus: cv.c_plus,
    })
}

/// Grid points for coefficient `coef` at which the first-order test does not reject, holding
/// the other coefficients at `beta_hat`.
pub fn confidence_scan(
    data: &Dataset,
    beta_hat: &DVector<f64>,
    coef: usize,
    grid: &[f64],
    alpha: f64,
    h: f64,
    kernel: &SmoothingKernel,
) -> Result<Vec<f64>> {
    if coef >= data.d() {
        return Err(SeeError::InvalidInput(format!("coefficient index {coef} out of range")));
    }
    let c_alpha = chi_sq_quantile(1.0 - alpha, data.d() as u32)?;
    let mut accepted = Vec::new();
    for &b in grid {
        let mut beta0 = beta_hat.clone();
        beta0[coef] = b;
        if s_statistic(&beta0, data, h, kernel)? <= c_alpha {
            accepted.push(b);
        }
    }
    Ok(accepted)
}
