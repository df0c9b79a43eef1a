//! Simulation designs.
//!
//! | id | model | default n, q | true coefficients at q |
//! |----|-------|--------------|------------------------|
//! | H11 | `y = 1 + x + U`, `x ~ U(1,5)`, `U = sqrt(2/3) t_3` | 50, 0.5 | `(1 + Q_U(q), 1)` |
//! | H12 | as H11 with `U = (sqrt 12 / pi)(E + ln ln 2)`, `E` standard Gumbel (maximum) | 50, 0.5 | `(1 + Q_U(q), 1)` |
//! | H13 | `y = 1 + x + (1 + x) V / 4`, `V ~ N(0,1)` | 50, 0.5 | `(1 + c, 1 + c)`, `c = Phi^{-1}(q) / 4` |
//! | SCF1-3 | `y = 1 + x + s(x)(V - Phi^{-1}(q))`, `s = 5, 1+x, 1+x` | 50; 0.5, 0.25, 0.75 | `(1, 1)` |
//! | E41 | triangular IV design below, normal errors | 20, 0.5 | `(0, 1)` |
//! | E42 | E41 with Cauchy errors, slope `1/(rho - sqrt(1-rho^2))` | 250, 0.5 | `(0, slope)` |
//! | E43 | E41 at q = 0.35 | 30, 0.35 | `(0, 1)` |
//! | JTPA1s | self-selection into a binary treatment, synthetic covariates | 5102, 0.5 | see below |
//! | JTPA2s | JTPA1s plus a continuous endogenous regressor and four normal controls | 5000 (50000 full scale), 0.5 | see below |
//!
//! Triangular design (E4x): `z ~ N(0,1)`, `(v1, v2) = (e1, sqrt(1-rho^2) e2 + rho e1)` with
//! `rho = 0.5` and `e1, e2` iid. The reduced form is `d = 1 + pi z + v2` and
//! `y = gamma1 + b pi z + v1` with `pi = 0.5`, `gamma1 = b`, so the structural equation is
//! `y = b d + (v1 - b v2)`. The structural error is re-centred by its own q-quantile, which
//! makes the intercept zero at every q. Regressors `(1, d)`, instruments `(1, z)`.
//!
//! JTPA-like designs: `hs ~ Bern(0.72)`, `black ~ Bern(0.26)`, `married ~ Bern(0.34)`, offer
//! `Z ~ Bern(0.67)`, rank `U ~ U(0,1)`, treatment `D = 0` when `Z = 0` and
//! `P(D = 1 | Z = 1, U = u) = min(1, u / 0.75)`. Outcome
//! `y = 7000 + 3500 hs - 2000 black + 7000 married + 2000 U D + g(U)` where `g` is the gamma
//! (shape 1.2, scale 15000) quantile function shifted to have `g(0.5) = 0`. The coefficient
//! vector at q is `(7000 + g(q), 3500, -2000, 7000, 2000 q)` on `(1, hs, black, married, D)`
//! with instruments `(1, hs, black, married, Z)`. JTPA2s inserts four `N(0,1)` controls with
//! coefficient 500 after `married` and appends `D2 = 0.8 Z2 + 0.2 Phi^{-1}(U)` with coefficient
//! 1000, instrumented by `Z2 ~ N(0,1)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, Gumbel, StandardNormal, StudentT};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Gamma, Normal, StudentsT};

use crate::error::{Result, SeeError};
use crate::instruments::Dataset;

const RHO: f64 = 0.5;
const FIRST_STAGE: f64 = 0.5;
const GAMMA_SHAPE: f64 = 1.2;
const GAMMA_SCALE: f64 = 15_000.0;
const JTPA_SHARES: [f64; 3] = [0.72, 0.26, 0.34];
const JTPA_COEFS: [f64; 3] = [3500.0, -2000.0, 7000.0];
const JTPA_CONST: f64 = 7000.0;
const OFFER_PROB: f64 = 0.67;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum DgpId {
    H11,
    H12,
    H13,
    #[serde(rename = "SCF1")]
    Scf1,
    #[serde(rename = "SCF2")]
    Scf2,
    #[serde(rename = "SCF3")]
    Scf3,
    E41,
    E42,
    E43,
    #[serde(rename = "JTPA1s")]
    Jtpa1s,
    #[serde(rename = "JTPA2s")]
    Jtpa2s,
}

impl DgpId {
    pub const ALL: [DgpId; 11] = [
        DgpId::H11,
        DgpId::H12,
        DgpId::H13,
        DgpId::Scf1,
        DgpId::Scf2,
        DgpId::Scf3,
        DgpId::E41,
        DgpId::E42,
        DgpId::E43,
        DgpId::Jtpa1s,
        DgpId::Jtpa2s,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DgpId::H11 => "H11",
            DgpId::H12 => "H12",
            DgpId::H13 => "H13",
            DgpId::Scf1 => "SCF1",
            DgpId::Scf2 => "SCF2",
            DgpId::Scf3 => "SCF3",
            DgpId::E41 => "E41",
            DgpId::E42 => "E42",
            DgpId::E43 => "E43",
            DgpId::Jtpa1s => "JTPA1s",
            DgpId::Jtpa2s => "JTPA2s",
        }
    }

    pub fn default_n(self) -> usize {
        match self {
            DgpId::E41 => 20,
            DgpId::E42 => 250,
            DgpId::E43 => 30,
            DgpId::Jtpa1s => 5102,
            DgpId::Jtpa2s => 5000,
            _ => 50,
        }
    }

    pub fn default_q(self) -> f64 {
        match self {
            DgpId::Scf2 => 0.25,
            DgpId::Scf3 => 0.75,
            DgpId::E43 => 0.35,
            _ => 0.5,
        }
    }

    pub fn is_exogenous(self) -> bool {
        matches!(self, DgpId::H11 | DgpId::H12 | DgpId::H13 | DgpId::Scf1 | DgpId::Scf2 | DgpId::Scf3)
    }

    /// Number of coefficients.
    pub fn dim(self) -> usize {
        match self {
            DgpId::Jtpa1s => 5,
            DgpId::Jtpa2s => 10,
            _ => 2,
        }
    }

    /// Index of the headline coefficient: the slope, or the treatment effect.
    pub fn focus(self) -> usize {
        match self {
            DgpId::Jtpa1s => 4,
            DgpId::Jtpa2s => 8,
            _ => 1,
        }
    }
}

impl fmt::Display for DgpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DgpId {
    type Err = SeeError;

    fn from_str(s: &str) -> Result<Self> {
        DgpId::ALL
            .into_iter()
            .find(|id| id.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| SeeError::UnknownDgp(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DgpSpec {
    pub id: DgpId,
    pub n: usize,
    pub q: f64,
}

impl DgpSpec {
    pub fn new(id: DgpId) -> Self {
        DgpSpec { id, n: id.default_n(), q: id.default_q() }
    }

    /// JTPA2s at n = 50000; identical to [`DgpSpec::new`] for every other design.
    pub fn full_scale(id: DgpId) -> Self {
        let spec = Self::new(id);
        if id == DgpId::Jtpa2s {
            spec.with_n(50_000)
        } else {
            spec
        }
    }

    pub fn with_n(self, n: usize) -> Self {
        DgpSpec { n, ..self }
    }

    pub fn with_q(self, q: f64) -> Self {
        DgpSpec { q, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(SeeError::Domain(format!("q must be in (0, 1), got {}", self.q)));
        }
        if self.n <= self.id.dim() + 1 {
            return Err(SeeError::InvalidInput(format!("{} needs n > {}, got {}", self.id, self.id.dim() + 1, self.n)));
        }
        Ok(())
    }

    pub fn true_beta(&self) -> Result<DVector<f64>> {
        self.validate()?;
        let q = self.q;
        let beta = match self.id {
            DgpId::H11 => vec![1.0 + t3_scaled_quantile(q), 1.0],
            DgpId::H12 => vec![1.0 + gumbel_scaled_quantile(q), 1.0],
            DgpId::H13 => {
                let c = std_normal_quantile(q) / 4.0;
                vec![1.0 + c, 1.0 + c]
            }
            DgpId::Scf1 | DgpId::Scf2 | DgpId::Scf3 => vec![1.0, 1.0],
            DgpId::E41 | DgpId::E43 => vec![0.0, 1.0],
            DgpId::E42 => vec![0.0, cauchy_slope()],
            DgpId::Jtpa1s => {
                vec![JTPA_CONST + earnings_shock(q), JTPA_COEFS[0], JTPA_COEFS[1], JTPA_COEFS[2], 2000.0 * q]
            }
            DgpId::Jtpa2s => {
                let mut b = vec![JTPA_CONST + earnings_shock(q), JTPA_COEFS[0], JTPA_COEFS[1], JTPA_COEFS[2]];
                b.extend([500.0; 4]);
                b.extend([2000.0 * q, 1000.0]);
                b
            }
        };
        Ok(DVector::from_vec(beta))
    }
}

fn std_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

fn t3_scaled_quantile(p: f64) -> f64 {
    let t3 = StudentsT::new(0.0, 1.0, 3.0).expect("valid t parameters");
    (2.0f64 / 3.0).sqrt() * t3.inverse_cdf(p)
}

const GUMBEL_SCALE: f64 = 1.102_657_790_843_585_6; // sqrt(12) / pi

fn gumbel_scaled_quantile(p: f64) -> f64 {
    let ln_ln2 = std::f64::consts::LN_2.ln();
    GUMBEL_SCALE * (-(-p.ln()).ln() + ln_ln2)
}

fn cauchy_slope() -> f64 {
    1.0 / (RHO - (1.0 - RHO * RHO).sqrt())
}

/// Gamma quantile shifted so the median is zero.
fn earnings_shock(p: f64) -> f64 {
    let g = Gamma::new(GAMMA_SHAPE, 1.0 / GAMMA_SCALE).expect("valid gamma parameters");
    g.inverse_cdf(p) - g.inverse_cdf(0.5)
}

/// Draws one dataset with a generator seeded from `seed`.
pub fn generate(spec: &DgpSpec, seed: u64) -> Result<(Dataset, DVector<f64>)> {
    generate_with(spec, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn generate_with<R: Rng + ?Sized>(spec: &DgpSpec, rng: &mut R) -> Result<(Dataset, DVector<f64>)> {
    let truth = spec.true_beta()?;
    let n = spec.n;
    let q = spec.q;
    let data = match spec.id {
        DgpId::H11 | DgpId::H12 | DgpId::H13 | DgpId::Scf1 | DgpId::Scf2 | DgpId::Scf3 => {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
            let y: Vec<f64> = x.iter().map(|&xi| exogenous_outcome(spec.id, xi, q, rng)).collect();
            let xm = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
            Dataset::exogenous(DVector::from_vec(y), xm, q)?
        }
        DgpId::E41 | DgpId::E42 | DgpId::E43 => triangular(spec, truth[1], rng)?,
        DgpId::Jtpa1s | DgpId::Jtpa2s => jtpa(spec, &truth, rng)?,
    };
    Ok((data, truth))
}

fn exogenous_outcome<R: Rng + ?Sized>(id: DgpId, x: f64, q: f64, rng: &mut R) -> f64 {
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    match id {
        DgpId::H11 => {
            let t: f64 = StudentT::new(3.0).expect("valid df").sample(rng);
            1.0 + x + (2.0f64 / 3.0).sqrt() * t
        }
        DgpId::H12 => {
            let e: f64 = Gumbel::new(0.0, 1.0).expect("valid scale").sample(rng);
            1.0 + x + GUMBEL_SCALE * (e + std::f64::consts::LN_2.ln())
        }
        DgpId::H13 => 1.0 + x + (1.0 + x) * normal() / 4.0,
        DgpId::Scf1 => 1.0 + x + 5.0 * (normal() - std_normal_quantile(q)),
        DgpId::Scf2 | DgpId::Scf3 => 1.0 + x + (1.0 + x) * (normal() - std_normal_quantile(q)),
        _ => unreachable!("{id} is not an exogenous design"),
    }
}

fn triangular<R: Rng + ?Sized>(spec: &DgpSpec, slope: f64, rng: &mut R) -> Result<Dataset> {
    let n = spec.n;
    let s = (1.0 - RHO * RHO).sqrt();
    let cauchy = spec.id == DgpId::E42;
    // Quantile of the structural error v1 - b v2 = (1 - b rho) e1 - b s e2.
    let (a1, a2) = (1.0 - slope * RHO, -slope * s);
    let centre = if cauchy {
        (a1.abs() + a2.abs()) * (std::f64::consts::PI * (spec.q - 0.5)).tan()
    } else {
        (a1 * a1 + a2 * a2).sqrt() * std_normal_quantile(spec.q)
    };
    let err = |rng: &mut R| -> f64 {
        if cauchy {
            Cauchy::new(0.0, 1.0).expect("valid scale").sample(rng)
        } else {
            rng.sample(StandardNormal)
        }
    };
    let mut y = DVector::zeros(n);
    let mut x = DMatrix::from_element(n, 2, 1.0);
    let mut z = DMatrix::from_element(n, 2, 1.0);
    for i in 0..n {
        let zi: f64 = rng.sample(StandardNormal);
        let e1 = err(rng);
        let e2 = err(rng);
        let v1 = e1;
        let v2 = s * e2 + RHO * e1;
        let d = 1.0 + FIRST_STAGE * zi + v2;
        y[i] = slope + slope * FIRST_STAGE * zi + v1 - centre;
        x[(i, 1)] = d;
        z[(i, 1)] = zi;
    }
    Dataset::new(y, x, z, spec.q)
}

fn jtpa<R: Rng + ?Sized>(spec: &DgpSpec, truth: &DVector<f64>, rng: &mut R) -> Result<Dataset> {
    let n = spec.n;
    let second = spec.id == DgpId::Jtpa2s;
    let d = spec.id.dim();
    let gamma = Gamma::new(GAMMA_SHAPE, 1.0 / GAMMA_SCALE).expect("valid gamma parameters");
    let median = gamma.inverse_cdf(0.5);
    let mut y = DVector::zeros(n);
    let mut x = DMatrix::zeros(n, d);
    let mut z = DMatrix::zeros(n, d);
    for i in 0..n {
        let mut row = Vec::with_capacity(d);
        let mut inst = Vec::with_capacity(d);
        row.push(1.0);
        for &p in &JTPA_SHARES {
            row.push(if rng.random_bool(p) { 1.0 } else { 0.0 });
        }
        if second {
            for _ in 0..4 {
                row.push(rng.sample(StandardNormal));
            }
        }
        inst.extend_from_slice(&row);
        let offer = rng.random_bool(OFFER_PROB);
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        let take_up: f64 = rng.random();
        let treated = offer && take_up < (u / 0.75).min(1.0);
        row.push(if treated { 1.0 } else { 0.0 });
        inst.push(if offer { 1.0 } else { 0.0 });
        let mut outcome = gamma.inverse_cdf(u) - median;
        if second {
            let z2: f64 = rng.sample(StandardNormal);
            row.push(0.8 * z2 + 0.2 * std_normal_quantile(u));
            inst.push(z2);
        }
        // Every coefficient except the treatment effect is constant in the rank.
        for (k, v) in row.iter().enumerate() {
            outcome += if k == 0 {
                JTPA_CONST
            } else if k == spec.id.focus() {
                2000.0 * u * v
            } else {
                truth[k] * v
            };
        }
        y[i] = outcome;
        for k in 0..d {
            x[(i, k)] = row[k];
            z[(i, k)] = inst[k];
        }
    }
    Dataset::new(y, x, z, spec.q)
}
