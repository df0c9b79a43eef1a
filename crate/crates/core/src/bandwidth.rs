//! MSE-optimal bandwidths for the SEE and the data-driven plug-in choice.
//!
//! All formulas minimize `n h^{2r} E(B)'E(B) - h tr E(AA')` or its directional analogue.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Result, SeeError};
use crate::estimator::{solve_see, SeeFit, SolverOptions};
use crate::instruments::Dataset;
use crate::kernels::{kernel_constants, SmoothingKernel};
use crate::linalg::{column_means, second_moment, solve, sym_sqrt_pair};
use crate::probdist::{mle_fit, FamilyKind, FitResult};

/// Replacement for a vanishing `f^{(r-1)}(0)`.
pub const ZERO_DERIVATIVE_SUBSTITUTE: f64 = 0.01;
/// Derivatives smaller than this in absolute value count as zero.
pub const ZERO_DERIVATIVE_THRESHOLD: f64 = 1e-12;
/// Doublings of `h0` tried when the initial fit has no root at `h0`.
const INITIAL_RETRIES: i32 = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingMoments {
    /// `tr E(AA')`.
    pub tr_aa: f64,
    /// `E(B)'E(B)`.
    pub bb: f64,
    pub eaa: DMatrix<f64>,
    pub eb: DVector<f64>,
    /// `q(1-q) E(ZZ')`.
    pub v: DMatrix<f64>,
    pub sigma_zx: Option<DMatrix<f64>>,
    pub substituted_zero_derivative: bool,
}

impl SmoothingMoments {
    /// Builds the moment set from `E(AA')` and `E(B)`, filling in the derived scalars.
    pub fn new(eaa: DMatrix<f64>, eb: DVector<f64>, v: DMatrix<f64>, sigma_zx: Option<DMatrix<f64>>) -> Self {
        SmoothingMoments {
            tr_aa: eaa.trace(),
            bb: eb.norm_squared(),
            eaa,
            eb,
            v,
            sigma_zx,
            substituted_zero_derivative: false,
        }
    }
}

fn factorial(r: usize) -> f64 {
    (1..=r).map(|k| k as f64).product()
}

fn exponent(r: usize) -> f64 {
    1.0 / (2.0 * r as f64 - 1.0)
}

/// `(2nr)^{-1/(2r-1)}`, the bandwidth of the initial fit.
pub fn initial_bandwidth(n: usize, r: usize) -> f64 {
    (2.0 * n as f64 * r as f64).powf(-exponent(r))
}

/// Minimizer of the SEE's asymptotic MSE, `(tr_AA / BB / (2nr))^{1/(2r-1)}`.
pub fn h_star_general(moments: &SmoothingMoments, n: usize, r: usize) -> Result<f64> {
    if !(moments.bb > 0.0) {
        return Err(SeeError::ZeroBias);
    }
    if !(moments.tr_aa > 0.0) {
        return Err(SeeError::Domain("tr E(AA') must be positive".into()));
    }
    Ok((moments.tr_aa / moments.bb / (2.0 * n as f64 * r as f64)).powf(exponent(r)))
}

/// Applies the zero-derivative guard; the flag reports whether it fired.
pub fn guard_derivative(f_r1: f64) -> (f64, bool) {
    if f_r1.abs() < ZERO_DERIVATIVE_THRESHOLD {
        (ZERO_DERIVATIVE_SUBSTITUTE, true)
    } else {
        (f_r1, false)
    }
}

/// Guard applied in units of the fitted scale `s`, so that it does not depend on how the
/// outcome is measured. Returns `f_r1` in the original units.
fn guard_scaled(f_r1: f64, s: f64, r: usize) -> (f64, bool) {
    let unit = s.powi(r as i32);
    let (g, substituted) = guard_derivative(f_r1 * unit);
    (g / unit, substituted)
}

/// Optimal bandwidth when the error is independent of the instruments.
///
/// Returns the bandwidth and whether the zero-derivative substitution was used.
pub fn h_star_iid(f0: f64, f_r1: f64, d: usize, n: usize, kernel: &SmoothingKernel) -> Result<(f64, bool)> {
    if !(f0 > 0.0 && f0.is_finite()) {
        return Err(SeeError::Domain(format!("density at zero must be positive, got {f0}")));
    }
    let (f_r1, substituted) = guard_derivative(f_r1);
    let kc = kernel_constants(kernel)?;
    let r = kernel.order();
    let rf = factorial(r);
    let base = rf * rf * kc.one_minus_g_sq * f0 / (2.0 * r as f64 * kc.moment_r.powi(2) * f_r1 * f_r1) * d as f64
        / n as f64;
    Ok((base.powf(exponent(r)), substituted))
}

/// `[n^{-1} sum Z'S^{-1}Z] / [Zbar'S^{-1}Zbar]` with `S = n^{-1} sum ZZ'`.
pub fn lemma_ratio(z: &DMatrix<f64>) -> Result<f64> {
    let s = second_moment(z);
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| SeeError::SingularMatrix("instrument second-moment matrix".into()))?;
    let n = z.nrows() as f64;
    let mut num = 0.0;
    for row in z.row_iter() {
        let zi = row.transpose();
        num += zi.dot(&chol.solve(&zi));
    }
    num /= n;
    let zbar = column_means(z);
    let den = zbar.dot(&chol.solve(&zbar));
    Ok(num / den)
}

/// Bandwidth minimizing the summed AMSE of `c_i' sqrt(n) (b - b0)` over the given directions.
///
/// Returns the bandwidth and whether a zero bias projection had to be replaced.
pub fn h_directional(c_vectors: &[DVector<f64>], moments: &SmoothingMoments, n: usize, r: usize) -> Result<(f64, bool)> {
    if c_vectors.is_empty() {
        return Err(SeeError::InvalidInput("at least one direction is required".into()));
    }
    let sigma_zx = moments
        .sigma_zx
        .as_ref()
        .ok_or_else(|| SeeError::InvalidInput("directional bandwidth needs Sigma_ZX".into()))?;
    let sigma_xz = sigma_zx.transpose();
    let (v_half, _) = sym_sqrt_pair(&moments.v, "V")?;
    let d = moments.eb.len();
    let mut num = 0.0;
    let mut den = 0.0;
    for c in c_vectors {
        if c.len() != d {
            return Err(SeeError::DimensionMismatch(format!("direction has {} entries, expected {d}", c.len())));
        }
        let u = v_half.transpose() * solve(&sigma_xz, c, "Sigma_XZ")?;
        if u.norm() == 0.0 {
            return Err(SeeError::InvalidInput("direction maps to the zero vector".into()));
        }
        num += u.dot(&(&moments.eaa * &u));
        den += u.dot(&moments.eb).powi(2);
    }
    let mut substituted = false;
    if !(den > 0.0) {
        return Err(SeeError::ZeroBias);
    }
    if den.sqrt() < ZERO_DERIVATIVE_THRESHOLD {
        den = ZERO_DERIVATIVE_SUBSTITUTE.powi(2);
        substituted = true;
    }
    Ok((((num / den) / (2.0 * n as f64 * r as f64)).powf(exponent(r)), substituted))
}

/// Plug-in estimates of `E(AA')`, `E(B)`, `V` and `Sigma_ZX` assuming the error is independent
/// of the instruments with density `fit`.
pub fn estimate_moments(data: &Dataset, fit: &FitResult, kernel: &SmoothingKernel) -> Result<SmoothingMoments> {
    let kc = kernel_constants(kernel)?;
    let r = kernel.order();
    let q = data.q;
    let s = second_moment(&data.z);
    let v = &s * (q * (1.0 - q));
    let (_, v_inv_half) = sym_sqrt_pair(&v, "V")?;
    let eaa = (&v_inv_half * &s * v_inv_half.transpose()) * (kc.one_minus_g_sq * fit.f0);
    let (f_r1, substituted) = guard_scaled(fit.f_r_minus_1(r), fit.family.scale(), r);
    let eb = (&v_inv_half * column_means(&data.z)) * (kc.moment_r / factorial(r) * f_r1);
    let sigma_zx = data.z.tr_mul(&data.x) * (fit.f0 / data.n() as f64);
    let mut m = SmoothingMoments::new(eaa, eb, v, Some(sigma_zx));
    m.substituted_zero_derivative = substituted;
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyOutcome {
    pub family: FamilyKind,
    pub fit: Option<FitResult>,
    /// Bandwidth implied by this fit; absent when the fit failed.
    pub candidate: Option<f64>,
    pub substituted_zero_derivative: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthReport {
    pub h0: f64,
    /// Bandwidth of the initial fit; larger than `h0` only when `h0` had no root.
    pub h_initial: f64,
    pub fits: Vec<FamilyOutcome>,
    pub selected: f64,
    pub selected_family: FamilyKind,
    /// True when the selected candidate used the zero-derivative substitution.
    pub substituted_zero_derivative: bool,
}

impl BandwidthReport {
    pub fn candidates(&self) -> Vec<(FamilyKind, f64)> {
        self.fits.iter().filter_map(|f| f.candidate.map(|h| (f.family, h))).collect()
    }

    pub fn selected_fit(&self) -> &FitResult {
        self.fits
            .iter()
            .find(|f| f.family == self.selected_family)
            .and_then(|f| f.fit.as_ref())
            .expect("selected family has a fit")
    }
}

/// SEE fit at `h0`, or at the first of `2 h0, 4 h0, ...` that solves when `h0` does not.
fn initial_fit(data: &Dataset, h0: f64, kernel: &SmoothingKernel, opts: &SolverOptions) -> Result<SeeFit> {
    let first = match solve_see(data, h0, kernel, None, opts) {
        Ok(fit) => return Ok(fit),
        Err(e) => e,
    };
    (1..=INITIAL_RETRIES)
        .find_map(|k| solve_see(data, h0 * 2f64.powi(k), kernel, None, opts).ok())
        .ok_or(first)
}

/// Plug-in bandwidth together with the initial SEE fit its residuals came from.
pub fn plugin_bandwidth_with_fit(
    data: &Dataset,
    kernel: &SmoothingKernel,
    opts: &SolverOptions,
) -> Result<(BandwidthReport, SeeFit)> {
    let n = data.n();
    let r = kernel.order();
    let h0 = initial_bandwidth(n, r);
    let initial = initial_fit(data, h0, kernel, opts)?;
    let residuals: Vec<f64> = initial.residuals.iter().copied().collect();
    let fits: Vec<FamilyOutcome> = FamilyKind::ALL
        .iter()
        .map(|&family| {
            let fitted = mle_fit(family, &residuals).and_then(|fit| {
                if !fit.converged {
                    return Err(SeeError::FitFailed(format!("{family}: optimizer did not converge")));
                }
                let sc = fit.family.scale();
                let (h, sub) = h_star_iid(fit.f0 * sc, fit.f_r_minus_1(r) * sc.powi(r as i32), data.d(), n, kernel)?;
                let h = h * sc;
                Ok((fit, h, sub))
            });
            match fitted {
                Ok((fit, h, sub)) => FamilyOutcome {
                    family,
                    fit: Some(fit),
                    candidate: Some(h),
                    substituted_zero_derivative: sub,
                    error: None,
                },
                Err(e) => FamilyOutcome {
                    family,
                    fit: None,
                    candidate: None,
                    substituted_zero_derivative: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let best = fits
        .iter()
        .filter(|f| f.candidate.is_some_and(|h| h > 0.0 && h.is_finite()))
        .min_by(|a, b| a.candidate.unwrap().total_cmp(&b.candidate.unwrap()))
        .ok_or(SeeError::AllFitsFailed)?;
    let report = BandwidthReport {
        h0,
        h_initial: initial.h,
        selected: best.candidate.unwrap(),
        selected_family: best.family,
        substituted_zero_derivative: best.substituted_zero_derivative,
        fits: fits.clone(),
    };
    Ok((report, initial))
}

/// Fits Gaussian, Student-t, gamma and GEV densities to the residuals of an initial SEE fit at
/// `(2nr)^{-1/(2r-1)}` and keeps the smallest implied bandwidth.
pub fn plugin_bandwidth(data: &Dataset, kernel: &SmoothingKernel, opts: &SolverOptions) -> Result<BandwidthReport> {
    plugin_bandwidth_with_fit(data, kernel, opts).map(|(r, _)| r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{epanechnikov_kernel, horowitz_kernel};
    use crate::probdist::DensityFamily;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_z(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, j| if j == 0 { 1.0 } else { r.random_range(-1.0..3.0) })
    }

    fn random_moments(d: usize, seed: u64) -> SmoothingMoments {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(d, d, |_, _| r.random_range(-1.0..1.0));
        let eaa = &a * a.transpose() + DMatrix::identity(d, d) * 0.1;
        let eb = DVector::from_fn(d, |_, _| r.random_range(-1.0..1.0));
        SmoothingMoments::new(eaa, eb, DMatrix::identity(d, d), None)
    }

    fn gaussian_fit(mean: f64, sd: f64) -> FitResult {
        FitResult::from_family(DensityFamily::Gaussian { mean, sd }, &[0.0], true).unwrap()
    }

    #[test]
    fn general_formula_arithmetic() {
        let m = SmoothingMoments::new(DMatrix::identity(1, 1), DVector::from_element(1, 1.0), DMatrix::identity(1, 1), None);
        let h = h_star_general(&m, 100, 2).unwrap();
        assert!((h - (1.0f64 / 400.0).powf(1.0 / 3.0)).abs() < 1e-15);
        let zero = SmoothingMoments::new(DMatrix::identity(1, 1), DVector::zeros(1), DMatrix::identity(1, 1), None);
        assert_eq!(h_star_general(&zero, 100, 2), Err(SeeError::ZeroBias));
    }

    #[test]
    fn general_formula_is_grid_argmin() {
        for seed in 0..10 {
            let m = random_moments(3, seed);
            let (n, r) = (250, 4);
            let hs = h_star_general(&m, n, r).unwrap();
            let obj = |h: f64| n as f64 * h.powi(2 * r as i32) * m.bb - h * m.tr_aa;
            for i in 0..200 {
                let h = hs * (0.1f64).powf(1.0 - i as f64 / 100.0);
                assert!(obj(h) >= obj(hs) - 1e-15 * obj(hs).abs());
            }
            // first-order condition
            let foc = 2.0 * r as f64 * n as f64 * hs.powi(2 * r as i32 - 1) * m.bb - m.tr_aa;
            assert!(foc.abs() < 1e-12 * m.tr_aa);
        }
    }

    #[test]
    fn iid_formula_properties() {
        let k = horowitz_kernel();
        let (h1, s1) = h_star_iid(0.4, 0.0, 2, 100, &k).unwrap();
        let (h2, s2) = h_star_iid(0.4, 0.01, 2, 100, &k).unwrap();
        assert!(s1 && !s2);
        assert_eq!(h1, h2);
        let (hd, _) = h_star_iid(0.4, 0.3, 4, 100, &k).unwrap();
        let (hd2, _) = h_star_iid(0.4, 0.3, 2, 100, &k).unwrap();
        assert!((hd / hd2 - 2f64.powf(1.0 / 7.0)).abs() < 1e-14);
        assert!(h_star_iid(0.0, 0.3, 2, 100, &k).is_err());
    }

    #[test]
    fn lemma_ratio_is_dimension() {
        for d in 1..=6 {
            let z = random_z(80, d, d as u64);
            assert!((lemma_ratio(&z).unwrap() - d as f64).abs() < 1e-8);
        }
    }

    #[test]
    fn estimated_moments_reproduce_iid_bandwidth() {
        for (seed, kernel) in [(1, horowitz_kernel()), (2, epanechnikov_kernel())] {
            let z = random_z(120, 3, seed);
            let y = DVector::from_fn(120, |i, _| i as f64 * 0.01);
            let data = Dataset::exogenous(y, z, 0.3).unwrap();
            let fit = gaussian_fit(0.4, 1.3);
            let m = estimate_moments(&data, &fit, &kernel).unwrap();
            let r = kernel.order();
            let general = h_star_general(&m, 120, r).unwrap();
            let (iid, _) = h_star_iid(fit.f0, fit.f_r_minus_1(r), 3, 120, &kernel).unwrap();
            assert!((general - iid).abs() < 1e-10 * iid);
            let kc = kernel_constants(&kernel).unwrap();
            assert!((m.tr_aa - kc.one_minus_g_sq * fit.f0 * 3.0 / (0.3 * 0.7)).abs() < 1e-10);
        }
    }

    #[test]
    fn intercept_only_moments() {
        let k = horowitz_kernel();
        let x = DMatrix::from_element(30, 1, 1.0);
        let data = Dataset::exogenous(DVector::from_fn(30, |i, _| i as f64), x, 0.5).unwrap();
        let fit = gaussian_fit(0.5, 1.0);
        let m = estimate_moments(&data, &fit, &k).unwrap();
        let kc = kernel_constants(&k).unwrap();
        assert!((m.tr_aa - kc.one_minus_g_sq * fit.f0 / 0.25).abs() < 1e-12);
        let bb = (kc.moment_r / 24.0 * fit.derivs[3]).powi(2) / 0.25;
        assert!((m.bb - bb).abs() < 1e-12 * bb);
        // doubling f0 doubles tr_AA and leaves E(B) alone
        let mut doubled = fit;
        doubled.f0 *= 2.0;
        let m2 = estimate_moments(&data, &doubled, &k).unwrap();
        assert!((m2.tr_aa - 2.0 * m.tr_aa).abs() < 1e-12);
        assert_eq!(m2.eb, m.eb);
    }

    #[test]
    fn directional_special_directions_recover_general() {
        let k = horowitz_kernel();
        let z = random_z(90, 3, 5);
        let mut r = ChaCha8Rng::seed_from_u64(6);
        let x = DMatrix::from_fn(90, 3, |i, j| if j == 0 { 1.0 } else { z[(i, j)] + r.random_range(-0.5..0.5) });
        let data = Dataset::projected(DVector::from_fn(90, |i, _| i as f64), x, &z, 0.4).unwrap();
        let fit = gaussian_fit(0.3, 1.0);
        let m = estimate_moments(&data, &fit, &k).unwrap();
        let sigma_xz = m.sigma_zx.as_ref().unwrap().transpose();
        let (_, v_inv_half) = sym_sqrt_pair(&m.v, "V").unwrap();
        let cs: Vec<DVector<f64>> = (0..3)
            .map(|i| &sigma_xz * v_inv_half.transpose() * DVector::from_fn(3, |j, _| if i == j { 1.0 } else { 0.0 }))
            .collect();
        let (hd, _) = h_directional(&cs, &m, 90, 4).unwrap();
        let hg = h_star_general(&m, 90, 4).unwrap();
        assert!((hd - hg).abs() < 1e-8 * hg);

        // a single direction is bounded below
        let eaa_inv = m.eaa.clone().try_inverse().unwrap();
        let bound = (1.0 / m.eb.dot(&(&eaa_inv * &m.eb)) / (2.0 * 90.0 * 4.0)).powf(1.0 / 7.0);
        for seed in 0..10 {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let c = DVector::from_fn(3, |_, _| r.random_range(-1.0..1.0));
            let (h1, _) = h_directional(&[c], &m, 90, 4).unwrap();
            assert!(h1 >= bound * (1.0 - 1e-12));
        }
    }

    #[test]
    fn plugin_selects_minimum() {
        let k = horowitz_kernel();
        let mut r = ChaCha8Rng::seed_from_u64(12);
        let n = 200;
        let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { r.random_range(1.0..5.0) });
        let y = DVector::from_fn(n, |i, _| 1.0 + x[(i, 1)] + r.random_range(-2.0..2.0));
        let data = Dataset::exogenous(y, x, 0.5).unwrap();
        let opts = SolverOptions::default();
        let report = plugin_bandwidth(&data, &k, &opts).unwrap();
        assert!(report.selected > 0.0);
        for (_, h) in report.candidates() {
            assert!(report.selected <= h);
        }
        assert_eq!(report, plugin_bandwidth(&data, &k, &opts).unwrap());
        assert!((report.h0 - initial_bandwidth(n, 4)).abs() < 1e-15);
    }
}
