use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use oas_core::codebook::{generate_codebook, Codebook};
use oas_core::engine::{run_oas, run_oas_with, BeliefState, OasConfig, RunOptions};
use oas_core::estimators::{sparse_gaussian_moments, SparseGaussianPrior};
use oas_core::harness::generate_signal;
use oas_core::rng::{derive_seed, seeded_rng};
use oas_core::selection::{select_random, SelectionStrategy, StrategyKind};
use oas_core::OasError;

fn config(n: usize, k: usize, l: usize, m: usize, kind: StrategyKind, seed: u64) -> OasConfig {
    OasConfig {
        n,
        k,
        l,
        m,
        sigma2_frame: 0.01,
        prior: SparseGaussianPrior::new(0.1).unwrap(),
        strategy: SelectionStrategy::new(kind, seed),
    }
}

#[test]
fn single_full_subframe_equals_one_shot_reference() {
    let n = 12;
    let cb = generate_codebook(30, n, 1.0 / n as f64, 8).unwrap();
    let x = generate_signal(n, 0.3, 9).unwrap();
    let cfg = config(n, n, n, 1, StrategyKind::Random, 10);
    let result = run_oas(&cfg, &x, &cb, 11).unwrap();

    let rows = select_random(&cb, n, derive_seed(10, &[0])).unwrap();
    let a = DMatrix::from_fn(n, n, |i, j| cb.matrix()[(rows[i], j)]);
    let mut rng = seeded_rng(11);
    let y = &a * &x
        + DVector::from_fn(n, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.1 * z
        });
    let a_inv = a.try_inverse().unwrap();
    let x_lin = &a_inv * &y;
    for i in 0..n {
        let var = 0.01 * a_inv.row(i).norm_squared();
        let expected = sparse_gaussian_moments(x_lin[i], var, 0.1).unwrap().mean;
        assert_abs_diff_eq!(result.estimates[i], expected, epsilon = 1e-8);
    }
}

#[test]
fn genie_residuals_decouple_exactly() {
    let n = 40;
    let cb = generate_codebook(80, n, 0.05, 1).unwrap();
    let x = generate_signal(n, 0.2, 2).unwrap();
    let cfg = config(n, 20, 8, 6, StrategyKind::Random, 3);
    let options = RunOptions {
        noiseless: true,
        genie_residuals: true,
    };
    let result = run_oas_with(&cfg, &x, &cb, 4, options).unwrap();
    for record in &result.records {
        for (&n, &v) in record.targets.iter().zip(&record.decoupled) {
            assert!(
                (v - x[n]).abs() <= 1e-10,
                "subframe {}: {} vs {}",
                record.subframe,
                v,
                x[n]
            );
        }
    }
}

#[test]
fn every_sample_is_sensed_once_the_budget_allows() {
    let (n, l) = (50, 7);
    let cb = generate_codebook(60, n, 0.1, 5).unwrap();
    let x = generate_signal(n, 0.1, 6).unwrap();
    let m = n.div_ceil(l);
    let result = run_oas(&config(n, 10, l, m, StrategyKind::Random, 7), &x, &cb, 8).unwrap();
    let mut seen = vec![false; n];
    for r in &result.records {
        for &i in &r.targets {
            seen[i] = true;
        }
    }
    assert!(seen.iter().all(|&s| s));
}

#[test]
fn effective_variance_falls_with_equal_updates() {
    let prior = SparseGaussianPrior::new(0.1).unwrap();
    let mut beliefs = BeliefState::new(1);
    let mut last = f64::INFINITY;
    for _ in 0..10 {
        beliefs.observe(0, 0.2, 0.05, &prior).unwrap();
        let effective = beliefs.noise_variance[0] / (beliefs.count[0] as f64).powi(2);
        assert!(effective < last);
        last = effective;
    }
}

#[test]
fn strategies_run_end_to_end() {
    let n = 30;
    let cb = generate_codebook(12, n, 0.1, 1).unwrap();
    let x = generate_signal(n, 0.1, 2).unwrap();
    for kind in [
        StrategyKind::Random,
        StrategyKind::Stepwise,
        StrategyKind::Exhaustive { max_subsets: 1_000 },
    ] {
        let r = run_oas(&config(n, 4, 3, 15, kind, 3), &x, &cb, 4).unwrap();
        assert_eq!(r.mse_trajectory.len(), 15);
        assert!(r.final_mse().is_finite());
    }
}

#[test]
fn codebook_too_small_for_k_is_rejected() {
    let cb: Codebook = generate_codebook(5, 10, 0.1, 1).unwrap();
    let x = DVector::zeros(10);
    let err = run_oas(&config(10, 6, 3, 2, StrategyKind::Random, 0), &x, &cb, 0).unwrap_err();
    assert!(matches!(err, OasError::InvalidArgument(_)), "{err}");
}
