//! Replication engine.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::dgp::{generate_with, DgpId, DgpSpec};
use super::metrics::{mean_bias, median_bias, mse, robust_mse};
use super::power::PowerPoint;
use super::rng::{rng_for, SEED_SCHEME};
use crate::bandwidth::{initial_bandwidth, plugin_bandwidth_with_fit};
use crate::error::{Result, SeeError};
use crate::estimator::{huge_h_estimate, iv_estimate, scf_estimate, solve_see, unsmoothed_qr_reference, SeeFit, SolverOptions};
use crate::instruments::Dataset;
use crate::kernels::{horowitz_kernel, SmoothingKernel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    SeePlugin,
    SeeFixed(f64),
    /// Smoothed criterion function at the SEE plug-in bandwidth.
    Scf,
    ScfFixed(f64),
    /// SEE at `0.01 range(residuals) / n`, standing in for unsmoothed (IV-)QR.
    TinyH,
    Iv,
    HugeH,
    /// Returns the true coefficients; useful for checking the metrics.
    Constant,
}

impl EstimatorKind {
    pub fn label(&self) -> String {
        match self {
            EstimatorKind::SeePlugin => "see-plugin".into(),
            EstimatorKind::SeeFixed(h) => format!("see-fixed:{h}"),
            EstimatorKind::Scf => "scf".into(),
            EstimatorKind::ScfFixed(h) => format!("scf-fixed:{h}"),
            EstimatorKind::TinyH => "tiny-h".into(),
            EstimatorKind::Iv => "iv".into(),
            EstimatorKind::HugeH => "huge-h".into(),
            EstimatorKind::Constant => "constant".into(),
        }
    }

    fn needs_plugin(&self) -> bool {
        matches!(self, EstimatorKind::SeePlugin | EstimatorKind::Scf | EstimatorKind::TinyH)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for EstimatorKind {
    type Err = SeeError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let fixed = |rest: &str| -> Result<f64> {
            let h: f64 = rest.parse().map_err(|_| SeeError::InvalidInput(format!("bad bandwidth in `{s}`")))?;
            if h > 0.0 && h.is_finite() {
                Ok(h)
            } else {
                Err(SeeError::Domain(format!("fixed bandwidth must be positive, got {h}")))
            }
        };
        match s {
            "see-plugin" | "see" => Ok(EstimatorKind::SeePlugin),
            "scf" => Ok(EstimatorKind::Scf),
            "tiny-h" => Ok(EstimatorKind::TinyH),
            "iv" => Ok(EstimatorKind::Iv),
            "huge-h" => Ok(EstimatorKind::HugeH),
            "constant" => Ok(EstimatorKind::Constant),
            _ => {
                if let Some(rest) = s.strip_prefix("see-fixed:") {
                    fixed(rest).map(EstimatorKind::SeeFixed)
                } else if let Some(rest) = s.strip_prefix("scf-fixed:") {
                    fixed(rest).map(EstimatorKind::ScfFixed)
                } else {
                    Err(SeeError::InvalidInput(format!("unknown estimator `{s}`")))
                }
            }
        }
    }
}

/// Parses a comma-separated estimator list.
pub fn parse_estimators(list: &str) -> Result<Vec<EstimatorKind>> {
    let parsed: Vec<EstimatorKind> = list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
    if parsed.is_empty() {
        return Err(SeeError::InvalidInput("empty estimator list".into()));
    }
    Ok(parsed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub reps: usize,
    pub master_seed: u64,
    /// Worker threads; results do not depend on it.
    pub parallelism: usize,
    pub kernel: SmoothingKernel,
    pub solver: SolverOptions,
}

impl McOptions {
    pub fn new(reps: usize, master_seed: u64, parallelism: usize) -> Self {
        McOptions { reps, master_seed, parallelism, kernel: horowitz_kernel(), solver: SolverOptions::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(SeeError::InvalidInput("reps must be at least 1".into()));
        }
        if self.parallelism == 0 {
            return Err(SeeError::InvalidInput("parallelism must be at least 1".into()));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Draw {
    pub rep: usize,
    pub beta: Vec<f64>,
    /// Bandwidth used, when the estimator has one.
    pub h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub rep: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefSummary {
    pub coef: usize,
    pub mse: f64,
    pub robust_mse: f64,
    pub median_bias: f64,
    pub mean_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub label: String,
    pub draws: usize,
    pub failures: usize,
    /// Empty when fewer than two replications succeeded.
    pub coefs: Vec<CoefSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McResult {
    pub dgp: DgpId,
    pub n: usize,
    pub q: f64,
    pub reps: usize,
    pub truth: Vec<f64>,
    pub estimator_labels: Vec<String>,
    /// Successful replications, per estimator.
    pub draws: Vec<Vec<Draw>>,
    pub failures: Vec<Vec<Failure>>,
    pub summaries: Vec<EstimatorSummary>,
    pub rejection_rates: Option<Vec<PowerPoint>>,
    pub master_seed: u64,
    pub seed_scheme: String,
}

impl McResult {
    /// Draws of coefficient `coef` for estimator `est`.
    pub fn coefficient_draws(&self, est: usize, coef: usize) -> Vec<f64> {
        self.draws[est].iter().map(|d| d.beta[coef]).collect()
    }

    pub fn summary(&self, label: &str) -> Option<&EstimatorSummary> {
        self.summaries.iter().find(|s| s.label == label)
    }
}

/// Plug-in bandwidth and the fit at the initial bandwidth. When every density fit fails the
/// initial bandwidth itself is used.
pub(crate) fn plugin_or_initial(data: &Dataset, kernel: &SmoothingKernel, opts: &SolverOptions) -> Result<(f64, SeeFit)> {
    match plugin_bandwidth_with_fit(data, kernel, opts) {
        Ok((report, initial)) => Ok((report.selected, initial)),
        Err(SeeError::AllFitsFailed) => {
            let h0 = initial_bandwidth(data.n(), kernel.order());
            let initial = solve_see(data, h0, kernel, None, opts)?;
            Ok((h0, initial))
        }
        Err(e) => Err(e),
    }
}

fn run_one(
    kind: EstimatorKind,
    data: &Dataset,
    truth: &DVector<f64>,
    plugin: Option<&Result<(f64, SeeFit)>>,
    opts: &McOptions,
) -> Result<(DVector<f64>, Option<f64>)> {
    let k = &opts.kernel;
    let s = &opts.solver;
    let plugin = || -> Result<&(f64, SeeFit)> { plugin.expect("plug-in computed").as_ref().map_err(Clone::clone) };
    let fit = match kind {
        EstimatorKind::SeePlugin => {
            let (h, initial) = plugin()?;
            solve_see(data, *h, k, Some(&initial.beta), s)?
        }
        EstimatorKind::SeeFixed(h) => solve_see(data, h, k, None, s)?,
        EstimatorKind::Scf => scf_estimate(data, plugin()?.0, k, s)?,
        EstimatorKind::ScfFixed(h) => scf_estimate(data, h, k, s)?,
        EstimatorKind::TinyH => unsmoothed_qr_reference(data, k, &plugin()?.1, s)?,
        EstimatorKind::HugeH => huge_h_estimate(data, k, s)?,
        EstimatorKind::Iv => return Ok((iv_estimate(data)?, None)),
        EstimatorKind::Constant => return Ok((truth.clone(), None)),
    };
    Ok((fit.beta, Some(fit.h)))
}

type RepOutcome = Vec<std::result::Result<Draw, Failure>>;

fn replicate(spec: &DgpSpec, estimators: &[EstimatorKind], rep: usize, opts: &McOptions) -> RepOutcome {
    let mut rng = rng_for(opts.master_seed, rep as u64);
    let generated = generate_with(spec, &mut rng);
    let (data, truth) = match generated {
        Ok(v) => v,
        Err(e) => {
            let message = format!("data generation failed: {e}");
            return estimators.iter().map(|_| Err(Failure { rep, message: message.clone() })).collect();
        }
    };
    let plugin = estimators
        .iter()
        .any(EstimatorKind::needs_plugin)
        .then(|| plugin_or_initial(&data, &opts.kernel, &opts.solver));
    estimators
        .iter()
        .map(|&kind| match run_one(kind, &data, &truth, plugin.as_ref(), opts) {
            Ok((beta, h)) if beta.iter().all(|b| b.is_finite()) => Ok(Draw { rep, beta: beta.iter().copied().collect(), h }),
            Ok(_) => Err(Failure { rep, message: "non-finite estimate".into() }),
            Err(e) => Err(Failure { rep, message: e.to_string() }),
        })
        .collect()
}

pub(crate) fn in_pool<T: Send>(parallelism: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| SeeError::InvalidInput(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(job))
}

/// Runs `opts.reps` replications of `spec`; replication `r` draws its data from
/// `counter_hash(master_seed, r)`, and every estimator sees the same data.
pub fn run_mc(spec: &DgpSpec, estimators: &[EstimatorKind], opts: &McOptions) -> Result<McResult> {
    opts.validate()?;
    if estimators.is_empty() {
        return Err(SeeError::InvalidInput("no estimators requested".into()));
    }
    let truth = spec.true_beta()?;
    let outcomes: Vec<RepOutcome> =
        in_pool(opts.parallelism, || (0..opts.reps).into_par_iter().map(|rep| replicate(spec, estimators, rep, opts)).collect())?;

    let m = estimators.len();
    let mut draws: Vec<Vec<Draw>> = vec![Vec::new(); m];
    let mut failures: Vec<Vec<Failure>> = vec![Vec::new(); m];
    for rep in outcomes {
        for (e, outcome) in rep.into_iter().enumerate() {
            match outcome {
                Ok(d) => draws[e].push(d),
                Err(f) => failures[e].push(f),
            }
        }
    }
    let labels: Vec<String> = estimators.iter().map(EstimatorKind::label).collect();
    let summaries = labels
        .iter()
        .enumerate()
        .map(|(e, label)| summarize(label, &draws[e], failures[e].len(), truth.as_slice()))
        .collect();
    Ok(McResult {
        dgp: spec.id,
        n: spec.n,
        q: spec.q,
        reps: opts.reps,
        truth: truth.iter().copied().collect(),
        estimator_labels: labels,
        draws,
        failures,
        summaries,
        rejection_rates: None,
        master_seed: opts.master_seed,
        seed_scheme: SEED_SCHEME.to_string(),
    })
}

/// Per-coefficient metrics recomputed from stored draws.
pub fn summarize(label: &str, draws: &[Draw], failures: usize, truth: &[f64]) -> EstimatorSummary {
    let coefs = if draws.len() < 2 {
        Vec::new()
    } else {
        (0..truth.len())
            .map(|c| {
                let col: Vec<f64> = draws.iter().map(|d| d.beta[c]).collect();
                CoefSummary {
                    coef: c,
                    mse: mse(&col, truth[c]).expect("nonempty"),
                    robust_mse: robust_mse(&col, truth[c]).expect("two or more draws"),
                    median_bias: median_bias(&col, truth[c]).expect("nonempty"),
                    mean_bias: mean_bias(&col, truth[c]).expect("nonempty"),
                }
            })
            .collect()
    };
    EstimatorSummary { label: label.to_string(), draws: draws.len(), failures, coefs }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimator_names() {
        for s in ["see-plugin", "see-fixed:0.8", "scf", "scf-fixed:1", "tiny-h", "iv", "huge-h", "constant"] {
            assert_eq!(s.parse::<EstimatorKind>().unwrap().label(), s);
        }
        assert!("see-fixed:-1".parse::<EstimatorKind>().is_err());
        assert!("ols".parse::<EstimatorKind>().is_err());
        assert_eq!(parse_estimators("iv, constant").unwrap(), vec![EstimatorKind::Iv, EstimatorKind::Constant]);
    }

    #[test]
    fn constant_estimator_has_zero_error() {
        let spec = DgpSpec::new(DgpId::H11);
        let res = run_mc(&spec, &[EstimatorKind::Constant, EstimatorKind::Iv], &McOptions::new(20, 1, 2)).unwrap();
        let s = res.summary("constant").unwrap();
        assert_eq!(s.draws, 20);
        assert!(s.coefs.iter().all(|c| c.mse == 0.0 && c.robust_mse == 0.0));
        assert!(res.summary("iv").unwrap().coefs[1].mse > 0.0);
    }

    #[test]
    fn worker_count_does_not_matter() {
        let spec = DgpSpec::new(DgpId::H13);
        let est = [EstimatorKind::SeePlugin, EstimatorKind::TinyH];
        let a = run_mc(&spec, &est, &McOptions::new(12, 42, 1)).unwrap();
        let b = run_mc(&spec, &est, &McOptions::new(12, 42, 4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.draws[0].len() + a.failures[0].len(), 12);
    }

    #[test]
    fn endogenous_designs_reject_scf_per_replication() {
        let spec = DgpSpec::new(DgpId::E41);
        let res = run_mc(&spec, &[EstimatorKind::ScfFixed(1.0), EstimatorKind::Iv], &McOptions::new(5, 3, 1)).unwrap();
        assert_eq!(res.failures[0].len(), 5);
        assert_eq!(res.draws[1].len(), 5);
        assert!(res.summaries[0].coefs.is_empty());
    }
}
