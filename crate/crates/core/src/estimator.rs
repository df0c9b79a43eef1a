//! Smoothed estimating equations and their root.
//!
//! The moment vector is `m_n(b) = n^{-1/2} sum_j Z_j [G((X_j'b - y_j)/h) - q]`. Roots are found by
//! damped Newton steps; when a step cannot reduce `|m_n|` the solver restarts from a wider
//! bandwidth and walks back down a geometric ladder.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SeeError};
use crate::instruments::Dataset;
use crate::kernels::SmoothingKernel;
use crate::linalg::solve;

/// Bandwidth of the "huge h" comparator.
pub const HUGE_H: f64 = 5e6;
/// Multiple of `range(residuals) / n` used as the "tiny h" bandwidth.
pub const TINY_H_FACTOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Tolerance on `|m_n| / sqrt(n)`, relative to `1 + max_k rms(Z_k)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Step contraction factor of the backtracking line search.
    pub damping: f64,
    pub max_halvings: usize,
    pub continuation: bool,
    /// Bandwidth factor between continuation steps.
    pub ladder: f64,
    /// Largest doubling exponent tried when looking for a solvable wide bandwidth.
    pub max_doublings: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 100,
            damping: 0.5,
            max_halvings: 30,
            continuation: true,
            ladder: 0.5,
            max_doublings: 60,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(SeeError::InvalidInput("solver needs tol > 0 and max_iter >= 1".into()));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) || !(self.ladder > 0.0 && self.ladder < 1.0) {
            return Err(SeeError::InvalidInput("damping and ladder factors must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeeFit {
    pub beta: DVector<f64>,
    pub h: f64,
    pub kernel: &'static str,
    pub residuals: DVector<f64>,
    /// `|m_n(beta)|` at the returned coefficients.
    pub moment_norm: f64,
    pub iterations: usize,
    /// Continuation steps `(h, beta)` when the rescue path was used.
    pub path: Vec<(f64, DVector<f64>)>,
}

fn scaled_arguments(beta: &DVector<f64>, data: &Dataset, h: f64) -> DVector<f64> {
    (&data.x * beta - &data.y) / h
}

pub fn see_moments(beta: &DVector<f64>, data: &Dataset, h: f64, kernel: &SmoothingKernel) -> DVector<f64> {
    let q = data.q;
    let w = scaled_arguments(beta, data, h).map(|v| kernel.g(v) - q);
    data.z.tr_mul(&w) / (data.n() as f64).sqrt()
}

/// Exact derivative of [`see_moments`] with respect to `beta'`.
pub fn see_jacobian(beta: &DVector<f64>, data: &Dataset, h: f64, kernel: &SmoothingKernel) -> DMatrix<f64> {
    let weights = scaled_arguments(beta, data, h).map(|v| kernel.g_prime(v) / h);
    let mut weighted = data.x.clone();
    for (mut row, w) in weighted.row_iter_mut().zip(weights.iter()) {
        row *= *w;
    }
    data.z.tr_mul(&weighted) / (data.n() as f64).sqrt()
}

/// `(Z'X)^{-1} Z'y` with the dataset's instruments.
pub fn iv_estimate(data: &Dataset) -> Result<DVector<f64>> {
    let zx = data.z.tr_mul(&data.x);
    let zy = data.z.tr_mul(&data.y);
    solve(&zx, &zy, "Z'X")
}

trait Equations {
    fn value(&self, beta: &DVector<f64>, h: f64) -> DVector<f64>;
    fn jacobian(&self, beta: &DVector<f64>, h: f64) -> DMatrix<f64>;
    fn data(&self) -> &Dataset;
    /// Function whose gradient is `value`, when one exists (exogenous designs).
    fn potential(&self, beta: &DVector<f64>, h: f64) -> Option<f64>;
}

/// Convergence threshold for `|m_n|`: `tol sqrt(n) (1 + max_k rms(Z_k))`.
fn moment_tolerance(data: &Dataset, tol: f64) -> f64 {
    let n = data.n() as f64;
    let rms = data.z.column_iter().map(|c| (c.norm_squared() / n).sqrt()).fold(0.0, f64::max);
    tol * n.sqrt() * (1.0 + rms)
}

struct See<'a> {
    data: &'a Dataset,
    kernel: &'a SmoothingKernel,
}

impl Equations for See<'_> {
    fn value(&self, beta: &DVector<f64>, h: f64) -> DVector<f64> {
        see_moments(beta, self.data, h, self.kernel)
    }

    fn jacobian(&self, beta: &DVector<f64>, h: f64) -> DMatrix<f64> {
        see_jacobian(beta, self.data, h, self.kernel)
    }

    fn data(&self) -> &Dataset {
        self.data
    }

    fn potential(&self, beta: &DVector<f64>, h: f64) -> Option<f64> {
        if !self.data.is_exogenous() {
            return None;
        }
        let q = self.data.q;
        let total: f64 = scaled_arguments(beta, self.data, h).iter().map(|&v| self.kernel.g_integral(v) - q * v).sum();
        Some(h * total / (self.data.n() as f64).sqrt())
    }
}

/// First-order condition of the smoothed check function, scaled like the SEE.
struct Scf<'a> {
    data: &'a Dataset,
    kernel: &'a SmoothingKernel,
    col_scale: Vec<f64>,
}

impl Equations for Scf<'_> {
    fn value(&self, beta: &DVector<f64>, h: f64) -> DVector<f64> {
        scf_foc(beta, self.data, h, self.kernel)
    }

    fn jacobian(&self, beta: &DVector<f64>, h: f64) -> DMatrix<f64> {
        let d = beta.len();
        let mut jac = DMatrix::zeros(d, d);
        for k in 0..d {
            let e = 1e-4 * h / self.col_scale[k];
            let mut up = beta.clone();
            let mut down = beta.clone();
            up[k] += e;
            down[k] -= e;
            let diff = (self.value(&up, h) - self.value(&down, h)) / (2.0 * e);
            jac.set_column(k, &diff);
        }
        jac
    }

    fn data(&self) -> &Dataset {
        self.data
    }

    fn potential(&self, beta: &DVector<f64>, h: f64) -> Option<f64> {
        let q = self.data.q;
        let total: f64 = scaled_arguments(beta, self.data, h).iter().map(|&v| v * (self.kernel.g(v) - q)).sum();
        Some(h * total / (self.data.n() as f64).sqrt())
    }
}

/// `n^{-1/2} sum_j X_j [G(v_j) - q + v_j G'(v_j)]` with `v_j = (X_j'b - y_j)/h`.
pub fn scf_foc(beta: &DVector<f64>, data: &Dataset, h: f64, kernel: &SmoothingKernel) -> DVector<f64> {
    let q = data.q;
    let w = scaled_arguments(beta, data, h).map(|v| kernel.g(v) - q + v * kernel.g_prime(v));
    data.x.tr_mul(&w) / (data.n() as f64).sqrt()
}

enum Failure {
    Stalled(f64),
    Singular,
    MaxIter(f64),
}

struct Solved {
    beta: DVector<f64>,
    norm: f64,
    iterations: usize,
}

struct Point {
    beta: DVector<f64>,
    m: DVector<f64>,
    norm: f64,
    potential: Option<f64>,
}

impl Point {
    fn at<E: Equations>(eq: &E, beta: DVector<f64>, h: f64) -> Self {
        let m = eq.value(&beta, h);
        let norm = m.norm();
        let potential = eq.potential(&beta, h);
        Point { beta, m, norm, potential }
    }

    /// Descent on the potential when there is one, otherwise on `|m|`. Near a root the
    /// potential stops resolving changes, so ties within roundoff fall back to `|m|`.
    fn improves_on(&self, old: &Point) -> bool {
        if !self.norm.is_finite() {
            return false;
        }
        match (self.potential, old.potential) {
            (Some(a), Some(b)) => {
                let noise = 1e-13 * (1.0 + b.abs());
                a < b - noise || (a <= b + noise && self.norm < old.norm)
            }
            _ => self.norm < old.norm,
        }
    }
}

fn line_search<E: Equations>(eq: &E, h: f64, cur: &Point, step: &DVector<f64>, halvings: usize, damping: f64) -> Option<Point> {
    let mut t = 1.0;
    for _ in 0..=halvings {
        let cand = Point::at(eq, &cur.beta + step * t, h);
        if cand.improves_on(cur) {
            return Some(cand);
        }
        t *= damping;
    }
    None
}

/// Marquardt-damped step. With a potential the Jacobian is its Hessian and is shifted
/// directly; otherwise the Gauss-Newton normal equations are damped.
fn levenberg_step<E: Equations>(eq: &E, h: f64, cur: &Point, jac: &DMatrix<f64>) -> Option<Point> {
    let (a0, rhs) = if cur.potential.is_some() {
        ((jac + jac.transpose()) * 0.5, -&cur.m)
    } else {
        (jac.tr_mul(jac), -jac.tr_mul(&cur.m))
    };
    let scale = a0.diagonal().amax();
    if !(scale > 0.0) {
        return None;
    }
    let diag = a0.diagonal().map(|v| v.abs().max(1e-12 * scale));
    let mut lambda = 1e-6;
    while lambda < 1e12 {
        let mut a = a0.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += lambda * diag[i];
        }
        if let Ok(step) = solve(&a, &rhs, "damped system") {
            let cand = Point::at(eq, &cur.beta + step, h);
            if cand.improves_on(cur) {
                return Some(cand);
            }
        }
        lambda *= 10.0;
    }
    None
}

/// Gradient step on the potential; needed where no observation is inside the kernel window.
fn steepest_step<E: Equations>(eq: &E, h: f64, cur: &Point) -> Option<Point> {
    cur.potential?;
    let step = &cur.m * (-(1.0 + cur.beta.norm()) / cur.norm);
    line_search(eq, h, cur, &step, 80, 0.5)
}

fn newton<E: Equations>(eq: &E, h: f64, init: &DVector<f64>, opts: &SolverOptions) -> std::result::Result<Solved, Failure> {
    let limit = moment_tolerance(eq.data(), opts.tol);
    let mut cur = Point::at(eq, init.clone(), h);
    for it in 0..opts.max_iter {
        if cur.norm <= limit {
            return Ok(Solved { beta: cur.beta, norm: cur.norm, iterations: it });
        }
        let jac = eq.jacobian(&cur.beta, h);
        if cur.potential.is_none() && jac.iter().all(|&v| v == 0.0) {
            return Err(Failure::Singular);
        }
        let next = solve(&jac, &(-&cur.m), "SEE Jacobian")
            .ok()
            .and_then(|step| line_search(eq, h, &cur, &step, opts.max_halvings, opts.damping))
            .or_else(|| levenberg_step(eq, h, &cur, &jac))
            .or_else(|| steepest_step(eq, h, &cur));
        match next {
            Some(p) => cur = p,
            None => return Err(Failure::Stalled(cur.norm)),
        }
    }
    if cur.norm <= limit {
        Ok(Solved { beta: cur.beta, norm: cur.norm, iterations: opts.max_iter })
    } else {
        Err(Failure::MaxIter(cur.norm))
    }
}

/// Follows the root from `wide` down to `target`, shrinking the bandwidth ratio of a rung
/// whenever Newton fails from the previous root.
fn descend<E: Equations>(eq: &E, wide: f64, start: Solved, target: f64, opts: &SolverOptions) -> Option<(Solved, Path)> {
    const MIN_LOG_STEP: f64 = 1e-3;
    let mut path = vec![(wide, start.beta.clone())];
    let mut total = start.iterations;
    let mut current = start;
    let mut cur_h = wide;
    let mut factor = opts.ladder;
    while cur_h > target {
        let next = (cur_h * factor).max(target);
        match newton(eq, next, &current.beta, opts) {
            Ok(s) => {
                total += s.iterations;
                current = s;
                cur_h = next;
                path.push((cur_h, current.beta.clone()));
                factor = (factor * factor).max(opts.ladder);
            }
            Err(_) => {
                factor = factor.sqrt();
                if -factor.ln() < MIN_LOG_STEP {
                    return None;
                }
            }
        }
    }
    current.iterations = total;
    Some((current, path))
}

fn failure_error(f: Failure, h: f64, iterations: usize) -> SeeError {
    match f {
        Failure::Singular => SeeError::SingularJacobian { h },
        Failure::Stalled(norm) => SeeError::Stalled { h, moment_norm: norm },
        Failure::MaxIter(norm) => SeeError::MaxIterations { iterations, moment_norm: norm },
    }
}

type Path = Vec<(f64, DVector<f64>)>;

fn solve_with_continuation<E: Equations>(
    eq: &E,
    h: f64,
    init: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<(Solved, Path)> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(SeeError::Domain(format!("bandwidth must be positive and finite, got {h}")));
    }
    opts.validate()?;
    let first = match newton(eq, h, init, opts) {
        Ok(s) => return Ok((s, Vec::new())),
        Err(f) => f,
    };
    if !opts.continuation {
        return Err(failure_error(first, h, opts.max_iter));
    }
    const MAX_DESCENTS: usize = 3;
    let mut descents = 0;
    for k in 1..=opts.max_doublings {
        let wide = h * 2f64.powi(k as i32);
        let Ok(start) = newton(eq, wide, init, opts) else { continue };
        if let Some(done) = descend(eq, wide, start, h, opts) {
            return Ok(done);
        }
        descents += 1;
        if descents == MAX_DESCENTS {
            break;
        }
    }
    Err(failure_error(first, h, opts.max_iter))
}

fn finish(data: &Dataset, kernel: &SmoothingKernel, h: f64, solved: Solved, path: Path) -> SeeFit {
    SeeFit {
        residuals: data.residuals(&solved.beta),
        beta: solved.beta,
        h,
        kernel: kernel.name(),
        moment_norm: solved.norm,
        iterations: solved.iterations,
        path,
    }
}

/// Root of the SEE at bandwidth `h`, started from `init` or from [`iv_estimate`].
pub fn solve_see(
    data: &Dataset,
    h: f64,
    kernel: &SmoothingKernel,
    init: Option<&DVector<f64>>,
    opts: &SolverOptions,
) -> Result<SeeFit> {
    let start = match init {
        Some(b) => {
            if b.len() != data.d() {
                return Err(SeeError::DimensionMismatch(format!("initial value has {} entries, expected {}", b.len(), data.d())));
            }
            b.clone()
        }
        None => iv_estimate(data)?,
    };
    let (solved, path) = solve_with_continuation(&See { data, kernel }, h, &start, opts)?;
    Ok(finish(data, kernel, h, solved, path))
}

/// Limit of the SEE estimator as `h` grows: the IV estimate with the intercept moved by
/// `(h / G'(0)) (q - 1/2)`.
pub fn huge_h_prediction(data: &Dataset, h: f64, kernel: &SmoothingKernel) -> Result<DVector<f64>> {
    let mut beta = iv_estimate(data)?;
    beta[0] += h / kernel.g_prime(0.0) * (data.q - 0.5);
    Ok(beta)
}

/// SEE root at [`HUGE_H`].
pub fn huge_h_estimate(data: &Dataset, kernel: &SmoothingKernel, opts: &SolverOptions) -> Result<SeeFit> {
    solve_see(data, HUGE_H, kernel, None, opts)
}

/// `TINY_H_FACTOR * range(residuals) / n`.
pub fn tiny_bandwidth(residuals: &DVector<f64>) -> f64 {
    let range = residuals.max() - residuals.min();
    TINY_H_FACTOR * range / residuals.len() as f64
}

/// Approximates the unsmoothed IV quantile regression estimator by walking the SEE root from
/// `start` down to the tiny bandwidth of its residuals.
pub fn unsmoothed_qr_reference(data: &Dataset, kernel: &SmoothingKernel, start: &SeeFit, opts: &SolverOptions) -> Result<SeeFit> {
    let target = tiny_bandwidth(&start.residuals);
    if !(target > 0.0) {
        return Err(SeeError::InvalidInput("residuals have zero range".into()));
    }
    let mut current = start.clone();
    let mut path = vec![(start.h, start.beta.clone())];
    let mut iterations = start.iterations;
    let mut h = start.h;
    while h > target {
        h = (h * opts.ladder).max(target);
        current = solve_see(data, h, kernel, Some(&current.beta), opts)?;
        iterations += current.iterations;
        path.push((h, current.beta.clone()));
    }
    if start.h <= target {
        current = solve_see(data, target, kernel, Some(&start.beta), opts)?;
        iterations += current.iterations;
        path.push((target, current.beta.clone()));
    }
    current.iterations = iterations;
    current.path = path;
    Ok(current)
}

/// Smoothed check-function estimator; requires exogenous regressors (`Z = X`).
pub fn scf_estimate(data: &Dataset, h: f64, kernel: &SmoothingKernel, opts: &SolverOptions) -> Result<SeeFit> {
    if !data.is_exogenous() {
        return Err(SeeError::EndogenousNotSupported);
    }
    let col_scale = data
        .x
        .column_iter()
        .map(|c| c.amax().max(f64::MIN_POSITIVE))
        .collect();
    let eq = Scf { data, kernel, col_scale };
    let start = iv_estimate(data)?;
    let (solved, path) = solve_with_continuation(&eq, h, &start, opts)?;
    Ok(finish(data, kernel, h, solved, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{horowitz_kernel, uniform_kernel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(n: usize, d: usize, q: f64, seed: u64) -> Dataset {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, d, |_, j| if j == 0 { 1.0 } else { r.random_range(-2.0..2.0) });
        let y = DVector::from_fn(n, |i, _| (0..d).map(|j| x[(i, j)]).sum::<f64>() + r.random_range(-1.5..1.5));
        Dataset::exogenous(y, x, q).unwrap()
    }

    fn symmetric_sample(center: f64) -> Dataset {
        let offsets = [0.3, 0.7, 1.1, 1.9, 2.4, 3.8];
        let mut ys: Vec<f64> = offsets.iter().flat_map(|o| [center + o, center - o]).collect();
        ys.push(center);
        let n = ys.len();
        Dataset::exogenous(DVector::from_vec(ys), DMatrix::from_element(n, 1, 1.0), 0.5).unwrap()
    }

    #[test]
    fn moments_match_naive_loop() {
        let k = horowitz_kernel();
        let data = random_data(37, 3, 0.3, 1);
        let beta = DVector::from_vec(vec![0.2, 1.1, 0.7]);
        let h = 0.8;
        let m = see_moments(&beta, &data, h, &k);
        let mut naive = [0.0f64; 3];
        for j in (0..data.n()).rev() {
            let mut xb = 0.0;
            for c in 0..3 {
                xb += data.x[(j, c)] * beta[c];
            }
            let w = k.g((xb - data.y[j]) / h) - data.q;
            for c in 0..3 {
                naive[c] += data.z[(j, c)] * w;
            }
        }
        for c in 0..3 {
            assert!((m[c] - naive[c] / (data.n() as f64).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn moments_saturate_far_from_data() {
        let k = horowitz_kernel();
        let data = random_data(25, 2, 0.3, 2);
        let beta = DVector::from_vec(vec![-100.0, 0.0]);
        let m = see_moments(&beta, &data, 0.5, &k);
        let sum_z = data.z.row_sum().transpose();
        let expected = sum_z * (-data.q / (data.n() as f64).sqrt());
        assert!((m - expected).amax() < 1e-14);
        assert!(see_jacobian(&beta, &data, 0.5, &k).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let k = horowitz_kernel();
        let mut r = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let data = random_data(60, 3, 0.4, 100 + trial);
            let beta = DVector::from_fn(3, |_, _| 1.0 + r.random_range(-0.5..0.5));
            let h = r.random_range(0.5..3.0);
            let jac = see_jacobian(&beta, &data, h, &k);
            for c in 0..3 {
                let e = 1e-6;
                let mut up = beta.clone();
                let mut down = beta.clone();
                up[c] += e;
                down[c] -= e;
                let fd = (see_moments(&up, &data, h, &k) - see_moments(&down, &data, h, &k)) / (2.0 * e);
                let err = (fd - jac.column(c)).amax() / jac.amax();
                assert!(err < 1e-6, "trial {trial}: {err}");
            }
        }
    }

    #[test]
    fn jacobian_scales_inversely_with_large_h() {
        let k = horowitz_kernel();
        let data = symmetric_sample(1.0);
        let beta = DVector::from_vec(vec![1.0]);
        let j1 = see_jacobian(&beta, &data, 1e4, &k)[(0, 0)];
        let j2 = see_jacobian(&beta, &data, 2e4, &k)[(0, 0)];
        assert!((j1 / j2 - 2.0).abs() < 1e-6);
        let expected = k.g_prime(0.0) * (data.n() as f64).sqrt() / 1e4;
        assert!((j1 - expected).abs() < 1e-6 * expected);
    }

    #[test]
    fn symmetric_sample_solves_to_center() {
        let k = horowitz_kernel();
        let data = symmetric_sample(2.5);
        for h in [0.05, 0.5, 2.0, 50.0] {
            let fit = solve_see(&data, h, &k, None, &SolverOptions::default()).unwrap();
            assert!((fit.beta[0] - 2.5).abs() < 1e-9, "h={h}: {}", fit.beta[0]);
        }
    }

    #[test]
    fn winsorized_mean_root() {
        let k = uniform_kernel();
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let ys: Vec<f64> = (0..41).map(|_| r.random_range(-3.0..5.0_f64).powi(3) / 10.0).collect();
        let n = ys.len();
        let data = Dataset::exogenous(DVector::from_vec(ys.clone()), DMatrix::from_element(n, 1, 1.0), 0.5).unwrap();
        let h = 0.7;
        let fit = solve_see(&data, h, &k, None, &SolverOptions::default()).unwrap();
        let psi = |b: f64| ys.iter().map(|y| ((b - y) / h).clamp(-1.0, 1.0)).sum::<f64>();
        let (mut lo, mut hi) = (-100.0, 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if psi(mid) < 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((fit.beta[0] - 0.5 * (lo + hi)).abs() < 1e-9);
    }

    #[test]
    fn iv_equals_ols_when_exogenous() {
        let data = random_data(40, 3, 0.5, 5);
        let b = iv_estimate(&data).unwrap();
        let qr = data.x.clone().qr();
        let ols = qr.r().solve_upper_triangular(&(qr.q().transpose() * &data.y)).unwrap();
        assert!((b - ols).amax() < 1e-10);
    }

    #[test]
    fn huge_bandwidth_median_case() {
        let k = horowitz_kernel();
        let data = random_data(200, 3, 0.5, 6);
        let fit = huge_h_estimate(&data, &k, &SolverOptions::default()).unwrap();
        let pred = huge_h_prediction(&data, HUGE_H, &k).unwrap();
        assert!((fit.beta - &pred).amax() / (1.0 + pred.amax()) < 1e-6);
    }

    #[test]
    fn tiny_h_reaches_sample_median() {
        let k = horowitz_kernel();
        let mut r = ChaCha8Rng::seed_from_u64(8);
        let mut ys: Vec<f64> = (0..31).map(|_| r.random_range(0.0..10.0)).collect();
        let n = ys.len();
        let data = Dataset::exogenous(DVector::from_vec(ys.clone()), DMatrix::from_element(n, 1, 1.0), 0.5).unwrap();
        let opts = SolverOptions::default();
        let start = solve_see(&data, 1.0, &k, None, &opts).unwrap();
        let tiny = unsmoothed_qr_reference(&data, &k, &start, &opts).unwrap();
        ys.sort_by(f64::total_cmp);
        let median = ys[n / 2];
        let gap = (ys[n / 2 + 1] - ys[n / 2]).min(ys[n / 2] - ys[n / 2 - 1]);
        assert!((tiny.beta[0] - median).abs() <= 0.5 * gap, "{} vs {median}", tiny.beta[0]);
        assert!(tiny.h < start.h);
    }

    #[test]
    fn scf_symmetric_and_foc() {
        let k = horowitz_kernel();
        let data = symmetric_sample(-1.0);
        let opts = SolverOptions::default();
        let scf = scf_estimate(&data, 1.0, &k, &opts).unwrap();
        let see = solve_see(&data, 1.0, &k, None, &opts).unwrap();
        assert!((scf.beta[0] - see.beta[0]).abs() < 1e-9);

        let data = random_data(50, 2, 0.25, 9);
        let fit = scf_estimate(&data, 0.8, &k, &opts).unwrap();
        let foc = scf_foc(&fit.beta, &data, 0.8, &k) / (data.n() as f64).sqrt();
        assert!(foc.amax() < 1e-8);
    }

    #[test]
    fn scf_rejects_endogenous() {
        let k = horowitz_kernel();
        let data = random_data(30, 2, 0.5, 10);
        let z = data.x.map(|v| v * 2.0);
        let endo = Dataset::new(data.y.clone(), data.x.clone(), z, 0.5).unwrap();
        assert_eq!(scf_estimate(&endo, 1.0, &k, &SolverOptions::default()), Err(SeeError::EndogenousNotSupported));
    }

    #[test]
    fn rejects_bad_bandwidth() {
        let k = horowitz_kernel();
        let data = random_data(30, 2, 0.5, 11);
        assert!(solve_see(&data, 0.0, &k, None, &SolverOptions::default()).is_err());
        assert!(solve_see(&data, f64::NAN, &k, None, &SolverOptions::default()).is_err());
    }
}
