//! Parametric residual densities fitted by maximum likelihood.
//!
//! Gaussian and Student-t are location-scale families fitted directly.
//! Gamma is fitted to `r - shift` with `shift = min(r) - (max(r) - min(r)) / n`,
//! so every residual lies strictly inside the support. GEV carries its own
//! location parameter and needs no shift.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Result, SeeError};
use crate::optim::{nelder_mead, NelderMeadOptions};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const DF_MIN: f64 = 2.01;
const DF_MAX: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Gaussian,
    StudentT,
    Gamma,
    Gev,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 4] = [FamilyKind::Gaussian, FamilyKind::StudentT, FamilyKind::Gamma, FamilyKind::Gev];

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Gaussian => "gaussian",
            FamilyKind::StudentT => "student_t",
            FamilyKind::Gamma => "gamma",
            FamilyKind::Gev => "gev",
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FamilyKind {
    type Err = SeeError;

    fn from_str(s: &str) -> Result<Self> {
        FamilyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SeeError::InvalidInput(format!("unknown density family `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DensityFamily {
    Gaussian { mean: f64, sd: f64 },
    StudentT { loc: f64, scale: f64, df: f64 },
    /// Gamma density of `x - shift`.
    Gamma { shape: f64, scale: f64, shift: f64 },
    /// Gumbel when `|shape| < 1e-8`.
    Gev { loc: f64, scale: f64, shape: f64 },
}

impl DensityFamily {
    pub fn kind(&self) -> FamilyKind {
        match self {
            DensityFamily::Gaussian { .. } => FamilyKind::Gaussian,
            DensityFamily::StudentT { .. } => FamilyKind::StudentT,
            DensityFamily::Gamma { .. } => FamilyKind::Gamma,
            DensityFamily::Gev { .. } => FamilyKind::Gev,
        }
    }

    pub fn scale(&self) -> f64 {
        match *self {
            DensityFamily::Gaussian { sd, .. } => sd,
            DensityFamily::StudentT { scale, .. } => scale,
            DensityFamily::Gamma { shape, scale, .. } => scale * shape.sqrt(),
            DensityFamily::Gev { scale, .. } => scale,
        }
    }

    /// Log density; `-inf` outside the support.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            DensityFamily::Gaussian { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * PI).ln()
            }
            DensityFamily::StudentT { loc, scale, df } => {
                let z = (x - loc) / scale;
                ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df) - 0.5 * (df * PI).ln() - scale.ln()
                    - 0.5 * (df + 1.0) * (z * z / df).ln_1p()
            }
            DensityFamily::Gamma { shape, scale, shift } => {
                let y = x - shift;
                if y <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                (shape - 1.0) * y.ln() - y / scale - ln_gamma(shape) - shape * scale.ln()
            }
            DensityFamily::Gev { loc, scale, shape } => {
                let z = (x - loc) / scale;
                if shape.abs() < 1e-8 {
                    -scale.ln() - z - (-z).exp()
                } else {
                    let s = 1.0 + shape * z;
                    if s <= 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    let ln_t = -s.ln() / shape;
                    -scale.ln() + (shape + 1.0) * ln_t - ln_t.exp()
                }
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// Open support interval.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            DensityFamily::Gaussian { .. } | DensityFamily::StudentT { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            DensityFamily::Gamma { shift, .. } => (shift, f64::INFINITY),
            DensityFamily::Gev { loc, scale, shape } => {
                if shape.abs() < 1e-8 {
                    (f64::NEG_INFINITY, f64::INFINITY)
                } else if shape > 0.0 {
                    (loc - scale / shape, f64::INFINITY)
                } else {
                    (f64::NEG_INFINITY, loc - scale / shape)
                }
            }
        }
    }

    pub fn loglik(&self, data: &[f64]) -> f64 {
        match *self {
            DensityFamily::StudentT { loc, scale, df } => {
                let c = ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df) - 0.5 * (df * PI).ln() - scale.ln();
                let tail: f64 = data.iter().map(|&x| ((x - loc) / scale).powi(2) / df).map(f64::ln_1p).sum();
                data.len() as f64 * c - 0.5 * (df + 1.0) * tail
            }
            DensityFamily::Gamma { shape, scale, shift } => {
                let c = -ln_gamma(shape) - shape * scale.ln();
                let mut total = data.len() as f64 * c;
                for &x in data {
                    let y = x - shift;
                    if y <= 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    total += (shape - 1.0) * y.ln() - y / scale;
                }
                total
            }
            _ => data.iter().map(|&x| self.ln_pdf(x)).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub family: DensityFamily,
    pub loglik: f64,
    /// Fitted density at zero.
    pub f0: f64,
    /// Derivatives of orders 0 through 4 at zero.
    pub derivs: [f64; 5],
    pub converged: bool,
}

impl FitResult {
    pub fn from_family(family: DensityFamily, data: &[f64], converged: bool) -> Result<Self> {
        let mut derivs = [0.0; 5];
        for (k, d) in derivs.iter_mut().enumerate() {
            *d = deriv_at_zero(&family, k)?;
        }
        Ok(FitResult { family, loglik: family.loglik(data), f0: derivs[0], derivs, converged })
    }

    /// `f^{(r-1)}(0)` for a kernel of order `r`.
    pub fn f_r_minus_1(&self, r: usize) -> f64 {
        assert!((1..=5).contains(&r), "kernel order must be between 1 and 5");
        self.derivs[r - 1]
    }
}

fn hermite_he(k: usize, z: f64) -> f64 {
    let z2 = z * z;
    match k {
        0 => 1.0,
        1 => z,
        2 => z2 - 1.0,
        3 => z * (z2 - 3.0),
        4 => z2 * z2 - 6.0 * z2 + 3.0,
        _ => unreachable!(),
    }
}

fn deriv_at_zero(family: &DensityFamily, order: usize) -> Result<f64> {
    if order > 4 {
        return Err(SeeError::Domain(format!("derivative order {order} exceeds 4")));
    }
    if let DensityFamily::Gaussian { mean, sd } = *family {
        let z = -mean / sd;
        let phi = (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
        let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
        return Ok(sign * hermite_he(order, z) * phi / sd.powi(order as i32 + 1));
    }
    // fourth differences at 1e-3 scale lose everything to roundoff
    let rel = if order == 4 { 1e-2 } else { 1e-3 };
    let step = (rel * family.scale()).max(1e-5);
    let (lo, hi) = family.support();
    if !(lo < -4.0 * step && hi > 4.0 * step) {
        return Err(SeeError::DensityNotFinite);
    }
    let f = |x: f64| family.pdf(x);
    for i in -4..=4 {
        if !f(i as f64 * step).is_finite() {
            return Err(SeeError::DensityNotFinite);
        }
    }
    let coarse = central_difference(&f, order, step);
    let fine = central_difference(&f, order, 0.5 * step);
    Ok(fine + (fine - coarse) / 3.0)
}

fn central_difference<F: Fn(f64) -> f64>(f: &F, order: usize, h: f64) -> f64 {
    match order {
        0 => f(0.0),
        1 => (f(h) - f(-h)) / (2.0 * h),
        2 => (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h),
        3 => (f(2.0 * h) - 2.0 * f(h) + 2.0 * f(-h) - f(-2.0 * h)) / (2.0 * h * h * h),
        4 => (f(2.0 * h) - 4.0 * f(h) + 6.0 * f(0.0) - 4.0 * f(-h) + f(-2.0 * h)) / (h * h * h * h),
        _ => unreachable!(),
    }
}

/// `f^{(order)}(0)` of the fitted density, `order <= 4`.
pub fn density_deriv_at_zero(fit: &FitResult, order: usize) -> Result<f64> {
    deriv_at_zero(&fit.family, order)
}

fn mean_var(data: &[f64]) -> (f64, f64) {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

fn median_mad(data: &[f64]) -> (f64, f64) {
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let med = sorted_median(&sorted);
    let mut dev: Vec<f64> = sorted.iter().map(|x| (x - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    (med, sorted_median(&dev))
}

fn sorted_median(s: &[f64]) -> f64 {
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn df_from_eta(eta: f64) -> f64 {
    DF_MIN + (DF_MAX - DF_MIN) * logistic(eta)
}

fn eta_from_df(df: f64) -> f64 {
    let p = ((df - DF_MIN) / (DF_MAX - DF_MIN)).clamp(1e-6, 1.0 - 1e-6);
    (p / (1.0 - p)).ln()
}

fn best_of<F: Fn(&[f64]) -> f64>(objective: F, starts: &[Vec<f64>], steps: &[f64]) -> (Vec<f64>, bool) {
    let opts = NelderMeadOptions::default();
    let mut best: Option<crate::optim::Minimum> = None;
    for x0 in starts {
        let m = nelder_mead(&objective, x0, steps, &opts);
        // restart once from the optimum to shake off a collapsed simplex
        let m = if m.value.is_finite() { nelder_mead(&objective, &m.x, steps, &opts) } else { m };
        if best.as_ref().is_none_or(|b| m.value < b.value) {
            best = Some(m);
        }
    }
    let best = best.expect("at least one start");
    let ok = best.converged && best.value.is_finite();
    (best.x, ok)
}

/// Maximum-likelihood fit of one family to `residuals`.
///
/// Fails when fewer than 10 residuals are given, when they are constant, when
/// the optimum is not finite, or when zero is not inside the fitted support.
pub fn mle_fit(kind: FamilyKind, residuals: &[f64]) -> Result<FitResult> {
    let n = residuals.len();
    if n < 10 {
        return Err(SeeError::InvalidInput(format!("density fit needs at least 10 residuals, got {n}")));
    }
    if residuals.iter().any(|x| !x.is_finite()) {
        return Err(SeeError::InvalidInput("residuals contain non-finite values".into()));
    }
    let (mean, var) = mean_var(residuals);
    if var <= 0.0 {
        return Err(SeeError::InvalidInput("residuals are constant".into()));
    }
    let sd = var.sqrt();
    let (family, converged) = match kind {
        FamilyKind::Gaussian => (DensityFamily::Gaussian { mean, sd }, true),
        FamilyKind::StudentT => {
            let build = |p: &[f64]| DensityFamily::StudentT { loc: p[0], scale: p[1].exp(), df: df_from_eta(p[2]) };
            let (med, mad) = median_mad(residuals);
            let robust_scale = if mad > 0.0 { 1.4826 * mad } else { sd };
            let kurt = residuals.iter().map(|x| ((x - mean) / sd).powi(4)).sum::<f64>() / n as f64;
            let mom_df = if kurt > 3.0 { (4.0 + 6.0 / (kurt - 3.0)).clamp(DF_MIN + 0.1, DF_MAX - 1.0) } else { 30.0 };
            let mom_scale = sd * ((mom_df - 2.0) / mom_df).sqrt();
            let starts = vec![
                vec![med, robust_scale.ln(), eta_from_df(5.0)],
                vec![mean, mom_scale.ln(), eta_from_df(mom_df)],
            ];
            let (p, ok) = best_of(|p| -build(p).loglik(residuals), &starts, &[0.1 * sd, 0.2, 0.5]);
            (build(&p), ok)
        }
        FamilyKind::Gamma => {
            let (min, max) = residuals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            let shift = min - (max - min) / n as f64;
            let shifted_mean = mean - shift;
            let shape0 = shifted_mean * shifted_mean / var;
            let scale0 = var / shifted_mean;
            let build = |p: &[f64]| DensityFamily::Gamma { shape: p[0].exp(), scale: p[1].exp(), shift };
            let starts = vec![vec![shape0.ln(), scale0.ln()], vec![0.0, shifted_mean.ln()]];
            let (p, ok) = best_of(|p| -build(p).loglik(residuals), &starts, &[0.3, 0.3]);
            (build(&p), ok)
        }
        FamilyKind::Gev => {
            let build = |p: &[f64]| DensityFamily::Gev { loc: p[0], scale: p[1].exp(), shape: p[2] };
            let objective = |p: &[f64]| if p[2] <= -1.0 { f64::INFINITY } else { -build(p).loglik(residuals) };
            let scale0 = sd * 6.0_f64.sqrt() / PI;
            let loc0 = mean - EULER_GAMMA * scale0;
            let starts: Vec<Vec<f64>> = [-0.1, 0.0, 0.1].iter().map(|&xi| vec![loc0, scale0.ln(), xi]).collect();
            let (p, ok) = best_of(objective, &starts, &[0.1 * sd, 0.2, 0.1]);
            (build(&p), ok)
        }
    };
    let fit = FitResult::from_family(family, residuals, converged)
        .map_err(|e| SeeError::FitFailed(format!("{kind}: {e}")))?;
    if !fit.loglik.is_finite() {
        return Err(SeeError::FitFailed(format!("{kind}: log-likelihood is not finite")));
    }
    Ok(fit)
}
