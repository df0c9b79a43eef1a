//! Size-adjusted power of the SEE chi-square test.
//!
//! The critical value is the empirical `(1 - alpha)` quantile of the statistic at the true
//! coefficients. Under the alternative of magnitude `delta` each replication draws a direction
//! `u` uniformly on the unit sphere and tests `beta0 = truth - u delta / sqrt(n)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::dgp::{generate_with, DgpSpec};
use super::engine::{in_pool, plugin_or_initial};
use super::metrics::quantile_type7;
use super::rng::rng_for;
use crate::error::{Result, SeeError};
use crate::estimator::{tiny_bandwidth, SolverOptions};
use crate::inference::s_statistic;
use crate::kernels::{horowitz_kernel, SmoothingKernel};

/// Bandwidth rule of the test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerMethod {
    SeePlugin,
    TinyH,
    Fixed(f64),
}

impl PowerMethod {
    pub fn label(&self) -> String {
        match self {
            PowerMethod::SeePlugin => "see-plugin".into(),
            PowerMethod::TinyH => "tiny-h".into(),
            PowerMethod::Fixed(h) => format!("see-fixed:{h}"),
        }
    }
}

impl fmt::Display for PowerMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for PowerMethod {
    type Err = SeeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "see-plugin" | "see" => Ok(PowerMethod::SeePlugin),
            "tiny-h" => Ok(PowerMethod::TinyH),
            other => match other.strip_prefix("see-fixed:").map(str::parse::<f64>) {
                Some(Ok(h)) if h > 0.0 && h.is_finite() => Ok(PowerMethod::Fixed(h)),
                _ => Err(SeeError::InvalidInput(format!("unknown test bandwidth rule `{other}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerOptions {
    pub reps: usize,
    pub alpha: f64,
    pub master_seed: u64,
    pub parallelism: usize,
    pub methods: Vec<PowerMethod>,
    pub kernel: SmoothingKernel,
    pub solver: SolverOptions,
}

impl PowerOptions {
    pub fn new(reps: usize, alpha: f64, master_seed: u64, parallelism: usize) -> Self {
        PowerOptions {
            reps,
            alpha,
            master_seed,
            parallelism,
            methods: vec![PowerMethod::SeePlugin, PowerMethod::TinyH],
            kernel: horowitz_kernel(),
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerPoint {
    pub estimator: String,
    pub delta: f64,
    pub rejection_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerCurve {
    pub points: Vec<PowerPoint>,
    /// Size-adjusted critical value per method.
    pub critical_values: Vec<(String, f64)>,
    /// Replications used per method.
    pub used: Vec<usize>,
    pub failures: Vec<usize>,
}

/// Statistics of one replication: per method, the null statistic followed by one per delta.
fn replicate(spec: &DgpSpec, deltas: &[f64], rep: usize, opts: &PowerOptions) -> Vec<Option<Vec<f64>>> {
    let mut rng = rng_for(opts.master_seed, rep as u64);
    let Ok((data, truth)) = generate_with(spec, &mut rng) else {
        return vec![None; opts.methods.len()];
    };
    let d = truth.len();
    let mut dir = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = dir.norm();
    dir /= norm;
    let scale = 1.0 / (data.n() as f64).sqrt();
    let plugin = opts
        .methods
        .iter()
        .any(|m| !matches!(m, PowerMethod::Fixed(_)))
        .then(|| plugin_or_initial(&data, &opts.kernel, &opts.solver));
    opts.methods
        .iter()
        .map(|m| {
            let h = match (m, &plugin) {
                (PowerMethod::Fixed(h), _) => *h,
                (PowerMethod::SeePlugin, Some(Ok((h, _)))) => *h,
                (PowerMethod::TinyH, Some(Ok((_, initial)))) => tiny_bandwidth(&initial.residuals),
                _ => return None,
            };
            std::iter::once(0.0)
                .chain(deltas.iter().copied())
                .map(|delta| {
                    let beta0 = &truth - &dir * (delta * scale);
                    s_statistic(&beta0, &data, h, &opts.kernel).ok()
                })
                .collect()
        })
        .collect()
}

pub fn size_adjusted_power(spec: &DgpSpec, deltas: &[f64], opts: &PowerOptions) -> Result<PowerCurve> {
    if opts.reps < 200 {
        return Err(SeeError::InvalidInput(format!("size-adjusted power needs at least 200 replications, got {}", opts.reps)));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(SeeError::Domain(format!("alpha must be in (0, 1), got {}", opts.alpha)));
    }
    if opts.parallelism == 0 || opts.methods.is_empty() {
        return Err(SeeError::InvalidInput("need parallelism >= 1 and at least one method".into()));
    }
    if deltas.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(SeeError::Domain("deviations must be finite and nonnegative".into()));
    }
    spec.validate()?;
    let stats: Vec<Vec<Option<Vec<f64>>>> =
        in_pool(opts.parallelism, || (0..opts.reps).into_par_iter().map(|rep| replicate(spec, deltas, rep, opts)).collect())?;

    let mut points = Vec::new();
    let mut critical_values = Vec::new();
    let mut used = Vec::new();
    let mut failures = Vec::new();
    for (mi, method) in opts.methods.iter().enumerate() {
        let ok: Vec<&Vec<f64>> = stats.iter().filter_map(|rep| rep[mi].as_ref()).collect();
        used.push(ok.len());
        failures.push(opts.reps - ok.len());
        if ok.is_empty() {
            return Err(SeeError::InvalidInput(format!("every replication failed for {method}")));
        }
        let null: Vec<f64> = ok.iter().map(|s| s[0]).collect();
        let cv = quantile_type7(&null, 1.0 - opts.alpha)?;
        critical_values.push((method.label(), cv));
        let rate = |k: usize| ok.iter().filter(|s| s[k] > cv).count() as f64 / ok.len() as f64;
        points.push(PowerPoint { estimator: method.label(), delta: 0.0, rejection_rate: rate(0) });
        for (k, &delta) in deltas.iter().enumerate() {
            if delta == 0.0 {
                continue;
            }
            points.push(PowerPoint { estimator: method.label(), delta, rejection_rate: rate(k + 1) });
        }
    }
    Ok(PowerCurve { points, critical_values, used, failures })
}
