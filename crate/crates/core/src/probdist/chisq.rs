//! Central and noncentral chi-square distributions.
//!
//! The noncentral distribution is evaluated as a Poisson(λ/2) mixture of
//! central chi-square terms, summed outward from the Poisson mode until the
//! terms fall below `1e-14` of the running total.

use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Result, SeeError};

const SERIES_TOL: f64 = 1e-14;
const MAX_TERMS: usize = 100_000;

/// Central chi-square density with (possibly non-integer) `dof` degrees of freedom.
pub fn chi_sq_pdf(x: f64, dof: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if x == 0.0 {
        return if dof < 2.0 {
            f64::INFINITY
        } else if dof == 2.0 {
            0.5
        } else {
            0.0
        };
    }
    let k = 0.5 * dof;
    ((k - 1.0) * x.ln() - 0.5 * x - k * std::f64::consts::LN_2 - ln_gamma(k)).exp()
}

pub fn chi_sq_cdf(x: f64, d: u32) -> Result<f64> {
    if d == 0 {
        return Err(SeeError::Domain("chi-square degrees of freedom must be >= 1".into()));
    }
    if x.is_nan() || x < 0.0 {
        return Err(SeeError::Domain(format!("chi-square CDF needs x >= 0, got {x}")));
    }
    Ok(central_cdf(x, d as f64))
}

fn central_cdf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        gamma_lr(0.5 * dof, 0.5 * x)
    }
}

fn central_sf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x.is_infinite() {
        0.0
    } else {
        gamma_ur(0.5 * dof, 0.5 * x)
    }
}

/// Upper tail `1 - F_d(x)`, accurate for large `x`.
pub fn chi_sq_sf(x: f64, d: u32) -> Result<f64> {
    chi_sq_cdf(x, d)?;
    Ok(central_sf(x, d as f64))
}

/// Quantile of the central chi-square by bracketed bisection on the CDF.
pub fn chi_sq_quantile(p: f64, d: u32) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(SeeError::Domain(format!("quantile level must be in (0, 1), got {p}")));
    }
    if d == 0 {
        return Err(SeeError::Domain("chi-square degrees of freedom must be >= 1".into()));
    }
    let dof = d as f64;
    let mut hi = dof.max(1.0);
    while central_cdf(hi, dof) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        // compare in the tail that carries more precision
        let below = if p > 0.5 { central_sf(mid, dof) > 1.0 - p } else { central_cdf(mid, dof) < p };
        if below {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn poisson_log_weight(i: usize, half_lambda: f64) -> f64 {
    -half_lambda + i as f64 * half_lambda.ln() - ln_gamma(i as f64 + 1.0)
}

fn poisson_mixture<F: Fn(usize) -> f64>(lambda: f64, term: F) -> f64 {
    let half = 0.5 * lambda;
    let mode = half.floor() as usize;
    let mut total = 0.0;
    let mut i = mode;
    loop {
        let t = poisson_log_weight(i, half).exp() * term(i);
        total += t;
        if (i > mode && t <= SERIES_TOL * total) || i - mode > MAX_TERMS {
            break;
        }
        i += 1;
    }
    let mut i = mode;
    while i > 0 {
        i -= 1;
        let t = poisson_log_weight(i, half).exp() * term(i);
        total += t;
        if t <= SERIES_TOL * total {
            break;
        }
    }
    total
}

/// Noncentral chi-square density `G'_d(x; λ)`.
pub fn noncentral_chi_sq_pdf(x: f64, d: u32, lambda: f64) -> f64 {
    assert!(lambda >= 0.0, "noncentrality must be nonnegative");
    let dof = d as f64;
    if lambda == 0.0 {
        return chi_sq_pdf(x, dof);
    }
    if x < 0.0 {
        return 0.0;
    }
    poisson_mixture(lambda, |i| chi_sq_pdf(x, dof + 2.0 * i as f64))
}

/// Noncentral chi-square distribution function `G_d(x; λ)`.
pub fn noncentral_chi_sq_cdf(x: f64, d: u32, lambda: f64) -> f64 {
    assert!(lambda >= 0.0, "noncentrality must be nonnegative");
    let dof = d as f64;
    if lambda == 0.0 {
        return central_cdf(x, dof);
    }
    if x <= 0.0 {
        return 0.0;
    }
    poisson_mixture(lambda, |i| central_cdf(x, dof + 2.0 * i as f64))
}
