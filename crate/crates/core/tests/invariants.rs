use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use see_core::bandwidth::{h_star_general, lemma_ratio, SmoothingMoments};
use see_core::estimator::{solve_see, SolverOptions};
use see_core::inference::s_statistic;
use see_core::instruments::Dataset;
use see_core::kernels::{epanechnikov_kernel, horowitz_kernel, uniform_kernel};
use see_core::montecarlo::{iqr, median, robust_mse};
use see_core::probdist::{chi_sq_cdf, chi_sq_quantile};

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Regressors `(1, x)`, instruments `(1, w)` with `x` correlated with `w`.
fn design(seed: u64, n: usize, q: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::from_element(n, 2, 1.0);
    let mut z = DMatrix::from_element(n, 2, 1.0);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let w = gaussian(&mut rng);
        let e = gaussian(&mut rng);
        x[(i, 1)] = w + 0.3 * e;
        z[(i, 1)] = w;
        y[i] = 1.0 + x[(i, 1)] + e + 0.5 * gaussian(&mut rng);
    }
    Dataset::new(y, x, z, q).unwrap()
}

fn fit(data: &Dataset, h: f64) -> DVector<f64> {
    solve_see(data, h, &horowitz_kernel(), None, &SolverOptions::default()).unwrap().beta
}

fn random_moments(seed: u64, d: usize) -> SmoothingMoments {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(d, d, |_, _| gaussian(&mut rng));
    let eaa = &a * a.transpose() + DMatrix::identity(d, d) * 0.05;
    let eb = DVector::from_fn(d, |_, _| gaussian(&mut rng));
    SmoothingMoments::new(eaa, eb, DMatrix::identity(d, d), None)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernel_cdfs_are_symmetric(v in -1.5f64..1.5) {
        for k in [horowitz_kernel(), epanechnikov_kernel(), uniform_kernel()] {
            prop_assert!((k.g(v) + k.g(-v) - 1.0).abs() < 1e-14);
            prop_assert!((k.g_prime(v) - k.g_prime(-v)).abs() < 1e-14);
        }
    }

    #[test]
    fn shifting_the_outcome_along_x_shifts_the_root(seed in 0u64..1000, c0 in -3.0f64..3.0, c1 in -3.0f64..3.0, q in 0.2f64..0.8) {
        let data = design(seed, 80, q);
        let c = DVector::from_vec(vec![c0, c1]);
        let moved = Dataset::new(&data.y + &data.x * &c, data.x.clone(), data.z.clone(), q).unwrap();
        let diff = fit(&moved, 0.8) - fit(&data, 0.8) - c;
        prop_assert!(diff.amax() < 1e-7, "{diff}");
    }

    #[test]
    fn rescaling_outcome_and_bandwidth_rescales_the_root(seed in 0u64..1000, a in 0.1f64..20.0) {
        let data = design(seed, 80, 0.4);
        let scaled = Dataset::new(&data.y * a, data.x.clone(), data.z.clone(), 0.4).unwrap();
        let diff = fit(&scaled, 0.8 * a) / a - fit(&data, 0.8);
        prop_assert!(diff.amax() < 1e-7, "{diff}");
    }

    #[test]
    fn root_and_statistic_ignore_instrument_basis(seed in 0u64..1000, a01 in -2.0f64..2.0, a11 in 0.2f64..3.0) {
        let data = design(seed, 80, 0.5);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, a01, 0.0, a11]);
        let rotated = Dataset::new(data.y.clone(), data.x.clone(), &data.z * a, 0.5).unwrap();
        let beta = fit(&data, 0.6);
        prop_assert!((fit(&rotated, 0.6) - &beta).amax() < 1e-7);
        let b0 = &beta + DVector::from_vec(vec![0.1, -0.2]);
        let k = horowitz_kernel();
        let s = s_statistic(&b0, &data, 0.6, &k).unwrap();
        let s_rot = s_statistic(&b0, &rotated, 0.6, &k).unwrap();
        prop_assert!((s - s_rot).abs() < 1e-9 * (1.0 + s));
    }

    #[test]
    fn instrument_ratio_is_dimension(seed in 0u64..1000, d in 2usize..7, n in 15usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DMatrix::from_fn(n, d, |_, j| if j == 0 { 1.0 } else { 2.0 * gaussian(&mut rng) + j as f64 });
        prop_assert!((lemma_ratio(&z).unwrap() - d as f64).abs() < 1e-8);
    }

    #[test]
    fn optimal_bandwidth_ignores_rotations(seed in 0u64..1000, d in 1usize..6, n in 10usize..10_000, angle in 0.0f64..6.3) {
        let m = random_moments(seed, d);
        let mut rot = DMatrix::identity(d, d);
        if d >= 2 {
            let (s, c) = angle.sin_cos();
            rot[(0, 0)] = c;
            rot[(0, 1)] = -s;
            rot[(1, 0)] = s;
            rot[(1, 1)] = c;
        }
        let turned = SmoothingMoments::new(&rot * &m.eaa * rot.transpose(), &rot * &m.eb, m.v.clone(), None);
        let (h, h_rot) = (h_star_general(&m, n, 4).unwrap(), h_star_general(&turned, n, 4).unwrap());
        prop_assert!((h / h_rot - 1.0).abs() < 1e-12);
    }

    #[test]
    fn robust_mse_recomputes_and_translates(seed in 0u64..1000, shift in -50.0f64..50.0, len in 2usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<f64> = (0..len).map(|_| gaussian(&mut rng) * 3.0).collect();
        let truth = 0.7;
        let r = robust_mse(&draws, truth).unwrap();
        let by_hand = (median(&draws).unwrap() - truth).powi(2) + (iqr(&draws).unwrap() / 1.349).powi(2);
        prop_assert!((r - by_hand).abs() < 1e-12 * (1.0 + r));
        let moved: Vec<f64> = draws.iter().map(|x| x + shift).collect();
        prop_assert!((robust_mse(&moved, truth + shift).unwrap() - r).abs() < 1e-9 * (1.0 + r));
    }

    #[test]
    fn chi_square_quantile_inverts_cdf(p in 0.001f64..0.999, d in 1u32..12) {
        let x = chi_sq_quantile(p, d).unwrap();
        prop_assert!((chi_sq_cdf(x, d).unwrap() - p).abs() < 1e-10);
    }
}
