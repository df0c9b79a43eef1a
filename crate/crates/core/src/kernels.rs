//! Smoothing functions `G` (a CDF-like ramp from 0 on `v <= -1` to 1 on
//! `v >= 1`) and their derivatives `G'`, which are symmetric kernels of
//! order `r` supported on `[-1, 1]`.
//!
//! `G` and `G'` are hand-coded piecewise polynomials; quadrature is only used
//! for the kernel constants that enter the bandwidth and inference formulas.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SeeError};
use crate::quadrature::integrate;

const QUAD_TOL: f64 = 1e-12;
const HOROWITZ_SCALE: f64 = 105.0 / 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// Fourth-order polynomial smoother used in smoothed median regression.
    Horowitz4,
    /// Integrated Epanechnikov kernel, order 2.
    Epanechnikov2,
    /// Integrated uniform kernel, order 2.
    Uniform2,
}

/// A smoothing function `G` with its kernel `G'` and order `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SmoothingKernel {
    kind: KernelKind,
}

pub fn horowitz_kernel() -> SmoothingKernel {
    SmoothingKernel { kind: KernelKind::Horowitz4 }
}

pub fn epanechnikov_kernel() -> SmoothingKernel {
    SmoothingKernel { kind: KernelKind::Epanechnikov2 }
}

/// Only used for the Winsorized-mean identity; `2G(u) - 1 = u` on `[-1, 1]`.
pub fn uniform_kernel() -> SmoothingKernel {
    SmoothingKernel { kind: KernelKind::Uniform2 }
}

impl SmoothingKernel {
    pub const NAMES: [&'static str; 3] = ["horowitz4", "epanechnikov2", "uniform2"];

    pub fn from_kind(kind: KernelKind) -> Self {
        Self { kind }
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            KernelKind::Horowitz4 => "horowitz4",
            KernelKind::Epanechnikov2 => "epanechnikov2",
            KernelKind::Uniform2 => "uniform2",
        }
    }

    /// Kernel order `r`: moments `1..r-1` of `G'` vanish, moment `r` does not.
    pub fn order(&self) -> usize {
        match self.kind {
            KernelKind::Horowitz4 => 4,
            KernelKind::Epanechnikov2 | KernelKind::Uniform2 => 2,
        }
    }

    #[inline]
    pub fn g(&self, v: f64) -> f64 {
        if v <= -1.0 {
            return 0.0;
        }
        if v >= 1.0 {
            return 1.0;
        }
        match self.kind {
            KernelKind::Horowitz4 => {
                let v2 = v * v;
                // u - 5/3 u^3 + 7/5 u^5 - 3/7 u^7, Horner in u^2
                let poly = v * (1.0 + v2 * (-5.0 / 3.0 + v2 * (7.0 / 5.0 + v2 * (-3.0 / 7.0))));
                0.5 + HOROWITZ_SCALE * poly
            }
            KernelKind::Epanechnikov2 => 0.5 + 0.75 * v - 0.25 * v * v * v,
            KernelKind::Uniform2 => 0.5 * (v + 1.0),
        }
    }

    #[inline]
    pub fn g_prime(&self, v: f64) -> f64 {
        if v.abs() > 1.0 {
            return 0.0;
        }
        match self.kind {
            KernelKind::Horowitz4 => {
                let v2 = v * v;
                HOROWITZ_SCALE * (1.0 + v2 * (-5.0 + v2 * (7.0 - 3.0 * v2)))
            }
            KernelKind::Epanechnikov2 => 0.75 * (1.0 - v * v),
            KernelKind::Uniform2 => 0.5,
        }
    }

    /// `∫_{-1}^{v} G(t) dt`; equals `v` for `v >= 1` because `G - 1/2` is odd.
    pub fn g_integral(&self, v: f64) -> f64 {
        if v <= -1.0 {
            return 0.0;
        }
        if v >= 1.0 {
            return v;
        }
        let even = |u: f64| -> f64 {
            let u2 = u * u;
            match self.kind {
                KernelKind::Horowitz4 => HOROWITZ_SCALE * u2 * (0.5 + u2 * (-5.0 / 12.0 + u2 * (7.0 / 30.0 - u2 * 3.0 / 56.0))),
                KernelKind::Epanechnikov2 => 0.375 * u2 - u2 * u2 / 16.0,
                KernelKind::Uniform2 => 0.25 * u2,
            }
        };
        0.5 * (v + 1.0) + even(v) - even(1.0)
    }

    pub fn support(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }
}

impl fmt::Display for SmoothingKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SmoothingKernel {
    type Err = SeeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "horowitz4" | "horowitz" => Ok(horowitz_kernel()),
            "epanechnikov2" | "epanechnikov" => Ok(epanechnikov_kernel()),
            "uniform2" | "uniform" => Ok(uniform_kernel()),
            other => Err(SeeError::UnknownKernel(other.to_string())),
        }
    }
}

/// `∫_{-1}^{1} v^k G'(v) dv`.
pub fn kernel_moment(k: u32, kernel: &SmoothingKernel) -> f64 {
    assert!(k <= 8, "kernel moments are only defined up to order 8");
    integrate(|v| v.powi(k as i32) * kernel.g_prime(v), -1.0, 1.0, QUAD_TOL)
}

/// Integrals of `G` and `G'` that enter the MSE expansion of the SEE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    /// `∫ v^r G'(v) dv`
    pub moment_r: f64,
    /// `1 - ∫_{-1}^{1} G(u)^2 du`
    pub one_minus_g_sq: f64,
    /// `∫ [G'(v) v]^2 dv`
    pub gprime_v_sq: f64,
    pub g_prime_at_zero: f64,
    pub order: usize,
}

pub fn kernel_constants(kernel: &SmoothingKernel) -> Result<KernelConstants> {
    let r = kernel.order();
    let moment_r = kernel_moment(r as u32, kernel);
    let g_sq = integrate(|u| kernel.g(u).powi(2), -1.0, 1.0, QUAD_TOL);
    let one_minus_g_sq = 1.0 - g_sq;
    if one_minus_g_sq <= 0.0 {
        return Err(SeeError::KernelCondition(one_minus_g_sq));
    }
    let gprime_v_sq = integrate(|v| (kernel.g_prime(v) * v).powi(2), -1.0, 1.0, QUAD_TOL);
    Ok(KernelConstants {
        moment_r,
        one_minus_g_sq,
        gprime_v_sq,
        g_prime_at_zero: kernel.g_prime(0.0),
        order: r,
    })
}

/// Smallest `v` in `[-1, 1]` with `G(v) = p`, by bisection. `G` is monotone
/// near zero for every shipped kernel, which is where this is used.
pub fn g_inverse_near_zero(kernel: &SmoothingKernel, p: f64) -> f64 {
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    // restrict to the monotone branch around zero
    if kernel.kind == KernelKind::Horowitz4 {
        // 1 - 5s + 7s^2 - 3s^3 = (1 - s)^2 (1 - 3s) with s = u^2, so G' > 0 on |u| < 1/sqrt(3)
        let b = 1.0 / 3.0_f64.sqrt();
        lo = -b;
        hi = b;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kernel.g(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shipped() -> [SmoothingKernel; 3] {
        [horowitz_kernel(), epanechnikov_kernel(), uniform_kernel()]
    }

    #[test]
    fn horowitz_values() {
        let k = horowitz_kernel();
        assert_eq!(k.g(0.0), 0.5);
        assert!((k.g(1.0) - 1.0).abs() < 1e-15);
        assert_eq!(k.g(-1.0), 0.0);
        // the polynomial itself reaches 1 at u = 1
        assert!((k.g(1.0 - 1e-12) - 1.0).abs() < 1e-10);
        assert_eq!(k.g_prime(0.0), 1.640625);
        let step = 1e-5;
        let fd = (k.g(step) - k.g(-step)) / (2.0 * step);
        assert!((fd - 1.640625).abs() < 1e-8);
    }

    #[test]
    fn g_integral_matches_quadrature() {
        for k in shipped() {
            for v in [-1.5f64, -1.0, -0.3, 0.0, 0.6, 1.0, 2.5] {
                let quad = integrate(|t| k.g(t), -1.0, v.max(-1.0), 1e-13);
                assert!((k.g_integral(v) - quad).abs() < 1e-12, "{} at {v}", k.name());
            }
        }
    }

    #[test]
    fn epanechnikov_and_uniform_values() {
        let e = epanechnikov_kernel();
        assert_eq!(e.g(0.0), 0.5);
        assert_eq!(e.g_prime(0.0), 0.75);
        let u = uniform_kernel();
        assert_eq!(u.g(0.5), 0.75);
        assert_eq!(u.g(-1.0), 0.0);
        for i in 0..=20 {
            let x = -1.0 + 0.1 * i as f64;
            assert!((2.0 * u.g(x) - 1.0 - x).abs() < 1e-15);
        }
    }

    #[test]
    fn saturation_outside_support() {
        for k in shipped() {
            for v in [-5.0, -1.0, -1.0 - 1e-9] {
                assert_eq!(k.g(v), 0.0);
            }
            for v in [1.0, 1.0 + 1e-9, 7.0] {
                assert_eq!(k.g(v), 1.0);
            }
            assert_eq!(k.g_prime(1.5), 0.0);
            assert_eq!(k.g_prime(-1.0 - 1e-12), 0.0);
        }
    }

    #[test]
    fn moments_vanish_below_order() {
        for k in shipped() {
            let r = k.order() as u32;
            assert!((kernel_moment(0, &k) - 1.0).abs() < 1e-10, "{k}");
            for m in 1..r {
                assert!(kernel_moment(m, &k).abs() < 1e-10, "{k} moment {m}");
            }
            assert!(kernel_moment(r, &k).abs() > 1e-3, "{k}");
        }
    }

    #[test]
    fn horowitz_fourth_moment_matches_closed_form() {
        // (105/64) * 2 * (1/5 - 5/7 + 7/9 - 3/11)
        let exact = 105.0 / 32.0 * (1.0 / 5.0 - 5.0 / 7.0 + 7.0 / 9.0 - 3.0 / 11.0);
        let quad = kernel_moment(4, &horowitz_kernel());
        assert!((quad - exact).abs() < 1e-10, "{quad} vs {exact}");
    }

    #[test]
    fn constants_for_shipped_kernels() {
        let h = kernel_constants(&horowitz_kernel()).unwrap();
        assert!((h.gprime_v_sq - 0.061).abs() < 1e-3);
        assert!(h.one_minus_g_sq > 0.0);
        // closed form: (105/64)^2 ∫ v^2 (1-5v^2+7v^4-3v^6)^2 dv = 0.0611888...
        assert!((h.gprime_v_sq - 0.061_188_811_188_811_2).abs() < 1e-10);
        let e = kernel_constants(&epanechnikov_kernel()).unwrap();
        assert!((e.gprime_v_sq - 0.086).abs() < 1e-3);
        // uniform: 1 - ∫((u+1)/2)^2 du over [-1, 1] = 1 - 2/3
        let u = kernel_constants(&uniform_kernel()).unwrap();
        assert!((u.one_minus_g_sq - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn integration_by_parts_identity() {
        for k in shipped() {
            let c = kernel_constants(&k).unwrap();
            let rhs = 2.0
                * integrate(|u| u * k.g_prime(u) * (k.g(u) - k.g(-u)), 0.0, 1.0, 1e-13);
            assert!((c.one_minus_g_sq - rhs).abs() < 1e-9, "{k}");
        }
    }

    #[test]
    fn g_is_antiderivative_of_g_prime() {
        for k in shipped() {
            let mut worst: f64 = 0.0;
            for i in 0..=1000 {
                let u = -1.0 + 2.0 * i as f64 / 1000.0;
                let integral = integrate(|v| k.g_prime(v), -1.0, u, 1e-13);
                worst = worst.max((k.g(u) - k.g(-1.0) - integral).abs());
            }
            assert!(worst < 1e-9, "{k}: {worst}");
        }
    }

    #[test]
    fn g_prime_is_even() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for k in shipped() {
            for _ in 0..100 {
                let v: f64 = rng.random_range(0.0..1.0);
                assert_eq!(k.g_prime(v), k.g_prime(-v));
            }
        }
    }

    #[test]
    fn registry_round_trip() {
        for name in SmoothingKernel::NAMES {
            let k: SmoothingKernel = name.parse().unwrap();
            assert_eq!(k.name(), name);
        }
        assert!(matches!("gauss".parse::<SmoothingKernel>(), Err(SeeError::UnknownKernel(_))));
    }

    #[test]
    fn inverse_near_zero() {
        for k in shipped() {
            for p in [0.25, 0.5, 0.75] {
                let v = g_inverse_near_zero(&k, p);
                assert!((k.g(v) - p).abs() < 1e-12, "{k} {p}");
            }
        }
    }
}
