use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use oas_core::baselines::{
    default_lambda_grid, lasso_kkt_violation, lasso_objective, lasso_solve, mmse_exact_small, support_posterior,
};
use oas_core::codebook::generate_codebook;
use oas_core::harness::generate_signal;
use oas_core::rng::seeded_rng;

fn instance(k: usize, n: usize, rho: f64, sigma2: f64, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let a = generate_codebook(k, n, 1.0 / k as f64, seed).unwrap().matrix().clone();
    let x = generate_signal(n, rho, seed + 1).unwrap();
    let mut rng = seeded_rng(seed + 2);
    let y = &a * x + DVector::from_fn(k, |_, _| sigma2.sqrt() * rng.sample::<f64, _>(StandardNormal));
    (a, y)
}

#[test]
fn lasso_solutions_satisfy_kkt() {
    for seed in 0..10 {
        let (a, y) = instance(10, 20, 0.2, 0.01, 10 * seed);
        for lambda in default_lambda_grid(&a, &y, 12) {
            let sol = lasso_solve(&a, &y, lambda, 1e-12, 100_000).unwrap();
            assert!(sol.converged);
            let kkt = lasso_kkt_violation(&a, &y, &sol.coefficients, lambda);
            assert!(kkt <= 1e-6, "seed {seed} lambda {lambda}: {kkt}");
        }
    }
}

#[test]
fn lasso_objective_never_increases_across_sweeps() {
    let (a, y) = instance(10, 20, 0.3, 0.01, 77);
    let lambda = 0.01;
    let mut last = lasso_objective(&a, &y, &DVector::zeros(20), lambda);
    for sweeps in 1..30 {
        let sol = lasso_solve(&a, &y, lambda, 0.0, sweeps).unwrap();
        let value = lasso_objective(&a, &y, &sol.coefficients, lambda);
        assert!(value <= last + 1e-12, "sweep {sweeps}: {value} > {last}");
        last = value;
    }
}

#[test]
fn exact_mmse_agrees_with_importance_sampling() {
    let (n, k, rho, sigma2) = (8, 4, 0.3, 0.5);
    let (a, y) = instance(k, n, rho, sigma2, 5);
    let exact = mmse_exact_small(&a, &y, rho, sigma2).unwrap();

    let mut rng = seeded_rng(99);
    let samples = 1_000_000;
    let mut draws = Vec::with_capacity(samples);
    let mut log_w = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x = DVector::from_fn(n, |_, _| {
            let on: f64 = rng.random();
            let g: f64 = rng.sample(StandardNormal);
            if on < rho {
                g
            } else {
                0.0
            }
        });
        log_w.push(-(&y - &a * &x).norm_squared() / (2.0 * sigma2));
        draws.push(x);
    }
    let peak = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - peak).exp()).collect();
    let total: f64 = w.iter().sum();
    for i in 0..n {
        let mean = w.iter().zip(&draws).map(|(w, x)| w * x[i]).sum::<f64>() / total;
        let se = w
            .iter()
            .zip(&draws)
            .map(|(w, x)| (w * (x[i] - mean)).powi(2))
            .sum::<f64>()
            .sqrt()
            / total;
        assert!(
            (exact[i] - mean).abs() <= 3.0 * se + 1e-9,
            "coord {i}: exact {} vs {mean} (se {se})",
            exact[i]
        );
    }
}

#[test]
fn posterior_weights_favour_the_true_support_at_low_noise() {
    let n = 10;
    let a = generate_codebook(8, n, 0.125, 3).unwrap().matrix().clone();
    let mut x = DVector::zeros(n);
    x[2] = 1.5;
    x[7] = -0.8;
    let y = &a * &x;
    let post = support_posterior(&a, &y, 0.2, 1e-6).unwrap();
    let best = post
        .weights
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    assert_eq!(best, (1 << 2) | (1 << 7));
}
