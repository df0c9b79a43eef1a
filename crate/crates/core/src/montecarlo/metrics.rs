//! Summary statistics over simulation draws.

use crate::error::{Result, SeeError};

/// Type-7 (linear interpolation) sample quantile.
pub fn quantile_type7(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(SeeError::InvalidInput("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(SeeError::Domain(format!("probability must be in [0, 1], got {p}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted_quantile(&sorted, p))
}

fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> Result<f64> {
    quantile_type7(values, 0.5)
}

pub fn iqr(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(SeeError::InvalidInput("IQR of an empty sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted_quantile(&sorted, 0.75) - sorted_quantile(&sorted, 0.25))
}

pub fn mean_bias(draws: &[f64], truth: f64) -> Result<f64> {
    if draws.is_empty() {
        return Err(SeeError::InvalidInput("no draws".into()));
    }
    Ok(draws.iter().map(|b| b - truth).sum::<f64>() / draws.len() as f64)
}

pub fn median_bias(draws: &[f64], truth: f64) -> Result<f64> {
    Ok(median(draws)? - truth)
}

/// Mean squared error around `truth`.
pub fn mse(draws: &[f64], truth: f64) -> Result<f64> {
    if draws.is_empty() {
        return Err(SeeError::InvalidInput("no draws".into()));
    }
    Ok(draws.iter().map(|b| (b - truth).powi(2)).sum::<f64>() / draws.len() as f64)
}

/// `(median - truth)^2 + (IQR / 1.349)^2`.
pub fn robust_mse(draws: &[f64], truth: f64) -> Result<f64> {
    if draws.len() < 2 {
        return Err(SeeError::InvalidInput("robust MSE needs at least two draws".into()));
    }
    let mb = median_bias(draws, truth)?;
    let spread = iqr(draws)? / 1.349;
    Ok(mb * mb + spread * spread)
}
