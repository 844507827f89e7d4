use std::f64::consts::{LN_2, PI};

use deep_prior_core::jacobian::{normalized_singular_values, spectrum_draws};
use deep_prior_core::stats::{self, EULER_GAMMA};
use deep_prior_core::{
    deep_derivative_log_sum, deep_jacobian, mc_log_derivative_moments, sample_layer_jacobian,
    spectrum_distribution, JacobianSpec, RngStream,
};
use rand_distr::{Distribution, StandardNormal};

// E[log|Z|] and Var[log|Z|] for Z ~ N(0, 1).
const LOG_ABS_MEAN: f64 = -0.5 * (EULER_GAMMA + LN_2);
const LOG_ABS_VAR: f64 = PI * PI / 8.0;

#[test]
fn log_derivative_moments_match_analytic_oracle() {
    let r = mc_log_derivative_moments(1.0, 1.0, 200_000, RngStream::new(1, 0)).unwrap();
    assert!((r.m_log_mc - LOG_ABS_MEAN).abs() < 3.0 * r.m_log_se, "{r:?}");
    assert!((r.v_log_mc - LOG_ABS_VAR).abs() < 3.0 * r.v_log_se, "{r:?}");
    assert!((r.m_log_exact - LOG_ABS_MEAN).abs() < 1e-12);
    // printed constants are E[log Z²]-like, far from the sample mean
    assert!((r.m_log_paper - r.m_log_mc).abs() > 0.5);
}

#[test]
fn doubling_sigma_shifts_log_mean_by_log_two() {
    let a = mc_log_derivative_moments(1.0, 1.0, 100_000, RngStream::new(2, 0)).unwrap();
    let b = mc_log_derivative_moments(2.0, 1.0, 100_000, RngStream::new(2, 1)).unwrap();
    let se = a.m_log_se.hypot(b.m_log_se);
    assert!((b.m_log_mc - a.m_log_mc - LN_2).abs() < 3.0 * se);
    // same stream: exact location shift
    let c = mc_log_derivative_moments(2.0, 1.0, 100_000, RngStream::new(2, 0)).unwrap();
    assert!((c.m_log_mc - a.m_log_mc - LN_2).abs() < 1e-12);
}

#[test]
fn single_layer_log_sum_is_log_magnitude() {
    let sums = deep_derivative_log_sum(1.0, 1.0, 1, 50_000, RngStream::new(3, 0)).unwrap();
    let m = stats::moments(&sums);
    assert!((m.mean - LOG_ABS_MEAN).abs() < 3.0 * m.mean_se);
}

#[test]
fn log_sums_scale_linearly_and_normalize() {
    let depth = 100;
    let sums = deep_derivative_log_sum(1.0, 1.0, depth, 20_000, RngStream::new(4, 0)).unwrap();
    let m = stats::moments(&sums);
    assert!((m.mean - depth as f64 * LOG_ABS_MEAN).abs() < 3.0 * m.mean_se);
    assert!((m.variance - depth as f64 * LOG_ABS_VAR).abs() < 3.0 * m.variance_se);
    let shallow = deep_derivative_log_sum(1.0, 1.0, 1, 20_000, RngStream::new(4, 1)).unwrap();
    assert!(stats::ks_standardized(&sums) < stats::ks_standardized(&shallow));
}

#[test]
fn layer_jacobian_entries_are_independent_with_column_variances() {
    let sigma = 1.3;
    let ls = [0.5, 1.0, 2.0];
    let n = 100_000;
    let mut rng = RngStream::new(5, 0).rng();
    let draws: Vec<_> = (0..n)
        .map(|_| sample_layer_jacobian(3, sigma, &ls, &mut rng).unwrap())
        .collect();
    let entry = |i: usize, j: usize| -> Vec<f64> { draws.iter().map(|m| m[(i, j)]).collect() };
    let bound = 4.0 / (n as f64).sqrt();
    for i in 0..3 {
        for j in 0..3 {
            let e = entry(i, j);
            let var = stats::moments(&e).variance;
            let want = sigma * sigma / (ls[j] * ls[j]);
            assert!((var / want - 1.0).abs() < 0.03, "({i},{j}) {var} vs {want}");
            for k in 0..9 {
                let (a, b) = (k / 3, k % 3);
                if (a, b) <= (i, j) {
                    continue;
                }
                let rho = stats::correlation(&e, &entry(a, b));
                assert!(rho.abs() < bound, "({i},{j})~({a},{b}) rho={rho}");
            }
        }
    }
}

#[test]
fn scalar_chain_rule_matches_deep_jacobian() {
    // five replicate two-sample tests at α = 0.01; at most one rejection allowed
    let depth = 4;
    let n = 10_000;
    let spec = JacobianSpec::isotropic(depth, 1, 1.0, 1.0, false);
    let crit = stats::ks_critical_two_sample(n, n);
    let mut rejections = 0;
    for rep in 0..5 {
        let mut rng = RngStream::new(6, 2 * rep).rng();
        let via_matrix: Vec<f64> = (0..n).map(|_| deep_jacobian(&spec, &mut rng).unwrap()[(0, 0)]).collect();
        let mut rng = RngStream::new(6, 2 * rep + 1).rng();
        let via_scalars: Vec<f64> = (0..n)
            .map(|_| (0..depth).map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng)).product::<f64>())
            .collect();
        if stats::ks_two_sample(&via_matrix, &via_scalars) > crit {
            rejections += 1;
        }
    }
    assert!(rejections <= 1, "{rejections} of 5 replicates rejected");
}

#[test]
fn two_layer_scalar_product_log_mean() {
    let spec = JacobianSpec::isotropic(2, 1, 1.0, 1.0, false);
    let mut rng = RngStream::new(7, 0).rng();
    let logs: Vec<f64> = (0..100_000)
        .map(|_| deep_jacobian(&spec, &mut rng).unwrap()[(0, 0)].abs().ln())
        .collect();
    let m = stats::moments(&logs);
    assert!((m.mean - 2.0 * LOG_ABS_MEAN).abs() < 3.0 * m.mean_se);
}

#[test]
fn connected_two_layer_variance() {
    // J_C = a·j1 + b with a, b, j1 ~ N(0, v): Var = v (v + 1)
    for (sigma, w) in [(1.0, 1.0), (1.5, 0.8)] {
        let v = sigma * sigma / (w * w);
        let spec = JacobianSpec::isotropic(2, 1, sigma, w, true);
        let mut rng = RngStream::new(8, 0).rng();
        let xs: Vec<f64> = (0..100_000).map(|_| deep_jacobian(&spec, &mut rng).unwrap()[(0, 0)]).collect();
        let m = stats::moments(&xs);
        assert!((m.variance - v * (v + 1.0)).abs() < 5.0 * m.variance_se, "{} vs {}", m.variance, v * (v + 1.0));
    }
}

#[test]
fn spectra_are_normalized_and_ordered() {
    for connected in [false, true] {
        let spec = JacobianSpec::isotropic(30, 4, 1.0, 2.0, connected);
        for sv in spectrum_draws(&spec, 200, RngStream::new(9, 0)).unwrap() {
            assert_eq!(sv[0], 1.0);
            assert!(sv.iter().all(|s| *s > 0.0 && *s <= 1.0));
            assert!(sv.windows(2).all(|w| w[0] >= w[1]));
        }
        let summary = spectrum_distribution(&spec, 200, RngStream::new(9, 0)).unwrap();
        for q in 0..3 {
            assert!(summary.quantiles.windows(2).all(|w| w[0][q] >= w[1][q]));
        }
        assert!(summary.quantiles.iter().all(|row| row[0] <= row[1] && row[1] <= row[2]));
    }
}

#[test]
fn standard_spectrum_collapses_with_depth() {
    let w = 5f64.sqrt();
    let shallow = spectrum_distribution(&JacobianSpec::isotropic(2, 5, 1.0, w, false), 1000, RngStream::new(0, 0)).unwrap();
    let deep = spectrum_distribution(&JacobianSpec::isotropic(50, 5, 1.0, w, false), 1000, RngStream::new(0, 0)).unwrap();
    assert!(deep.median(1) < shallow.median(1));
    let connected = spectrum_distribution(&JacobianSpec::isotropic(50, 5, 1.0, w, true), 1000, RngStream::new(0, 0)).unwrap();
    assert!(connected.median(1) >= 5.0 * deep.median(1));
}

#[test]
fn spectrum_draws_are_reproducible() {
    let spec = JacobianSpec::isotropic(20, 3, 1.0, 1.0, false);
    let a = normalized_singular_values(&spec, &mut RngStream::new(10, 4).rng()).unwrap();
    let b = normalized_singular_values(&spec, &mut RngStream::new(10, 4).rng()).unwrap();
    assert_eq!(a, b);
}
