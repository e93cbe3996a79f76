use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use oas_core::estimators::{generic_posterior_moments, sparse_gaussian_moments, SparseGaussianPrior};

fn grid() -> Vec<(f64, f64, f64)> {
    let ys = [0.0, 0.3, -2.5, 10.0, 100.0];
    let sigma2s = [1e-4, 1e-3, 0.01, 0.25, 2.0];
    let rhos = [0.01, 0.1, 0.5, 0.95];
    let mut out = Vec::new();
    for &y in &ys {
        for &s in &sigma2s {
            for &r in &rhos {
                out.push((y, s, r));
            }
        }
    }
    out
}

#[test]
fn closed_form_matches_quadrature_on_grid() {
    let points = grid();
    assert_eq!(points.len(), 100);
    for (y, sigma2, rho) in points {
        let closed = sparse_gaussian_moments(y, sigma2, rho).unwrap();
        let quad = generic_posterior_moments(y, sigma2, &SparseGaussianPrior::new(rho).unwrap()).unwrap();
        assert_abs_diff_eq!(closed.mean, quad.mean, epsilon = 1e-6);
        assert_abs_diff_eq!(closed.variance, quad.variance, epsilon = 1e-6);
    }
}

#[test]
fn wiener_limit_for_dense_prior() {
    for &(y, s) in &[(0.4, 0.1), (-3.0, 1.0), (7.0, 1e-3)] {
        let m = sparse_gaussian_moments(y, s, 1.0).unwrap();
        assert_abs_diff_eq!(m.mean, y / (1.0 + s), epsilon = 1e-12);
        assert_abs_diff_eq!(m.variance, s / (1.0 + s), epsilon = 1e-12);
    }
}

proptest! {
    #[test]
    fn odd_mean_even_variance(y in -50.0f64..50.0, s in 1e-4f64..5.0, rho in 0.001f64..0.999) {
        let a = sparse_gaussian_moments(y, s, rho).unwrap();
        let b = sparse_gaussian_moments(-y, s, rho).unwrap();
        prop_assert!((a.mean + b.mean).abs() <= 1e-12 * (1.0 + y.abs()));
        prop_assert!((a.variance - b.variance).abs() <= 1e-12);
    }

    #[test]
    fn mean_shrinks_toward_zero(y in -50.0f64..50.0, s in 1e-4f64..5.0, rho in 0.001f64..0.999) {
        let m = sparse_gaussian_moments(y, s, rho).unwrap();
        prop_assert!(m.mean.abs() <= y.abs() + 1e-12);
        prop_assert!(m.mean * y >= 0.0);
    }

    #[test]
    fn variance_is_bounded(y in -50.0f64..50.0, s in 1e-4f64..5.0, rho in 0.001f64..0.999) {
        let m = sparse_gaussian_moments(y, s, rho).unwrap();
        prop_assert!(m.variance >= 0.0);
        prop_assert!(m.variance <= 1.0 + s);
    }
}
