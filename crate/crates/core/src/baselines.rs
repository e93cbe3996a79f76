//! Non-adaptive references: the whole frame is spent on one sensing round
//! with `K` randomly chosen codewords at the frame noise level, and the
//! signal is recovered either by LASSO or by the exact posterior mean.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::codebook::{Codebook, SensingMatrix};
use crate::engine::{mse, to_db};
use crate::error::{OasError, Result};
use crate::rng::seeded_rng;
use crate::selection::select_random;

/// Largest signal length accepted by [`mmse_exact_small`].
pub const MAX_EXACT_MMSE_DIM: usize = 20;

pub const DEFAULT_LASSO_TOL: f64 = 1e-10;
pub const DEFAULT_LASSO_MAX_SWEEPS: usize = 100_000;
pub const DEFAULT_LAMBDA_POINTS: usize = 30;

/// One-shot compressive measurement `y = A x + z`, `z ~ N(0, sigma2 I)`.
#[derive(Debug, Clone)]
pub struct OneShotInstance {
    pub sensing: SensingMatrix,
    pub observations: DVector<f64>,
    pub signal: DVector<f64>,
    pub sigma2: f64,
}

impl OneShotInstance {
    pub fn generate(
        codebook: &Codebook,
        signal: &DVector<f64>,
        k: usize,
        sigma2: f64,
        selection_seed: u64,
        noise_seed: u64,
    ) -> Result<Self> {
        if signal.len() != codebook.dim() {
            return Err(OasError::invalid("signal length does not match codebook dimension"));
        }
        if !(sigma2 > 0.0) {
            return Err(OasError::invalid("noise variance must be positive"));
        }
        let sensing = codebook.sensing_matrix(&select_random(codebook, k, selection_seed)?)?;
        let mut rng = seeded_rng(noise_seed);
        let sd = sigma2.sqrt();
        let mut observations = sensing.matrix() * signal;
        for v in observations.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sd * z;
        }
        Ok(OneShotInstance {
            sensing,
            observations,
            signal: signal.clone(),
            sigma2,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.sensing.matrix()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub coefficients: DVector<f64>,
    pub converged: bool,
    pub sweeps: usize,
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// `(1/2)||y - A x||^2 + lambda ||x||_1`
pub fn lasso_objective(a: &DMatrix<f64>, y: &DVector<f64>, x: &DVector<f64>, lambda: f64) -> f64 {
    0.5 * (y - a * x).norm_squared() + lambda * x.lp_norm(1)
}

/// Largest violation of the LASSO optimality conditions:
/// `[A^T (y - A x)]_n = lambda sign(x_n)` on the support and
/// `|[A^T (y - A x)]_n| <= lambda` off it.
pub fn lasso_kkt_violation(a: &DMatrix<f64>, y: &DVector<f64>, x: &DVector<f64>, lambda: f64) -> f64 {
    let grad = a.tr_mul(&(y - a * x));
    grad.iter()
        .zip(x.iter())
        .map(|(&g, &xn)| {
            if xn != 0.0 {
                (g - lambda * xn.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Cyclic coordinate descent from zero.
pub fn lasso_solve(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    tol: f64,
    max_sweeps: usize,
) -> Result<LassoSolution> {
    lasso_solve_from(a, y, lambda, DVector::zeros(a.ncols()), tol, max_sweeps)
}

/// Cyclic coordinate descent from `start`. A full sweep whose largest
/// coordinate change is below `tol` ends the run; between full sweeps the
/// solver iterates on the current support only. Hitting `max_sweeps`
/// returns the last iterate with `converged = false`.
pub fn lasso_solve_from(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    start: DVector<f64>,
    tol: f64,
    max_sweeps: usize,
) -> Result<LassoSolution> {
    let (k, n) = a.shape();
    if y.len() != k || start.len() != n {
        return Err(OasError::invalid("LASSO inputs have inconsistent dimensions"));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(OasError::invalid(format!(
            "LASSO penalty must be positive (got {lambda})"
        )));
    }
    let col_norm2: Vec<f64> = a.column_iter().map(|c| c.norm_squared()).collect();
    let mut x = start;
    let mut residual = y - a * &x;

    let update = |j: usize, x: &mut DVector<f64>, residual: &mut DVector<f64>| -> f64 {
        if col_norm2[j] == 0.0 {
            let old = std::mem::replace(&mut x[j], 0.0);
            return old.abs();
        }
        let col = a.column(j);
        let rho = col.dot(residual) + col_norm2[j] * x[j];
        let new = soft_threshold(rho, lambda) / col_norm2[j];
        let delta = new - x[j];
        if delta != 0.0 {
            residual.axpy(-delta, &col, 1.0);
            x[j] = new;
        }
        delta.abs()
    };

    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let change = (0..n).map(|j| update(j, &mut x, &mut residual)).fold(0.0, f64::max);
        if change < tol {
            return Ok(LassoSolution {
                coefficients: x,
                converged: true,
                sweeps,
            });
        }
        let active: Vec<usize> = (0..n).filter(|&j| x[j] != 0.0).collect();
        while sweeps < max_sweeps {
            sweeps += 1;
            let change = active
                .iter()
                .map(|&j| update(j, &mut x, &mut residual))
                .fold(0.0, f64::max);
            if change < tol {
                break;
            }
        }
    }
    Ok(LassoSolution {
        coefficients: x,
        converged: false,
        sweeps,
    })
}

/// `points` penalties log-spaced over `[1e-3, 1] * ||A^T y||_inf`,
/// largest first.
pub fn default_lambda_grid(a: &DMatrix<f64>, y: &DVector<f64>, points: usize) -> Vec<f64> {
    let top = a.tr_mul(y).amax();
    if points <= 1 {
        return vec![top];
    }
    (0..points)
        .map(|i| top * 10f64.powf(-3.0 * i as f64 / (points - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoOracle {
    pub lambda: f64,
    pub mse: f64,
    pub mse_db: f64,
    /// Worst KKT violation over every solve on the grid.
    pub max_kkt_violation: f64,
    pub all_converged: bool,
}

/// Solves along `lambda_grid` (warm-started from the largest penalty) and
/// keeps the penalty with the lowest MSE against the true signal.
pub fn lasso_oracle_mse(instance: &OneShotInstance, lambda_grid: &[f64]) -> Result<LassoOracle> {
    if lambda_grid.is_empty() {
        return Err(OasError::invalid("empty LASSO penalty grid"));
    }
    let a = instance.matrix();
    let y = &instance.observations;
    let mut order: Vec<usize> = (0..lambda_grid.len()).collect();
    order.sort_by(|&i, &j| lambda_grid[j].total_cmp(&lambda_grid[i]).then(i.cmp(&j)));

    let mut warm = DVector::zeros(a.ncols());
    let mut best: Option<(usize, f64)> = None;
    let mut max_kkt = 0.0f64;
    let mut all_converged = true;
    for &g in &order {
        let lambda = lambda_grid[g];
        let sol = lasso_solve_from(a, y, lambda, warm, DEFAULT_LASSO_TOL, DEFAULT_LASSO_MAX_SWEEPS)?;
        all_converged &= sol.converged;
        max_kkt = max_kkt.max(lasso_kkt_violation(a, y, &sol.coefficients, lambda));
        let err = mse(&instance.signal, &sol.coefficients);
        // ties resolve to the earlier grid entry
        let better = match best {
            None => true,
            Some((bg, be)) => err < be || (err == be && g < bg),
        };
        if better {
            best = Some((g, err));
        }
        warm = sol.coefficients;
    }
    let (g, err) = best.expect("non-empty grid");
    Ok(LassoOracle {
        lambda: lambda_grid[g],
        mse: err,
        mse_db: to_db(err),
        max_kkt_violation: max_kkt,
        all_converged,
    })
}

/// Exact posterior over supports together with the posterior mean.
#[derive(Debug, Clone)]
pub struct SupportPosterior {
    /// Posterior probability of each support, indexed by bitmask.
    pub weights: Vec<f64>,
    pub mean: DVector<f64>,
}

/// Enumerates all `2^N` supports. Given support `S` the observations are
/// `N(0, sigma2 I + A_S A_S^T)` and the conditional mean of `x_S` is
/// `A_S^T (sigma2 I + A_S A_S^T)^{-1} y`; supports are weighted by prior
/// times evidence, normalized in the log domain.
pub fn support_posterior(a: &DMatrix<f64>, y: &DVector<f64>, rho: f64, sigma2: f64) -> Result<SupportPosterior> {
    let (k, n) = a.shape();
    if n > MAX_EXACT_MMSE_DIM {
        return Err(OasError::invalid(format!(
            "exact MMSE enumerates 2^N supports; N={n} exceeds the limit of {MAX_EXACT_MMSE_DIM}"
        )));
    }
    if y.len() != k {
        return Err(OasError::invalid("observation length does not match sensing matrix"));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(OasError::invalid("sparsity factor must lie in [0, 1]"));
    }
    if !(sigma2 > 0.0) {
        return Err(OasError::invalid("noise variance must be positive"));
    }
    let (log_on, log_off) = (rho.ln(), (1.0 - rho).ln());
    let supports = 1usize << n;
    let mut log_w = vec![f64::NEG_INFINITY; supports];
    // running sums rescaled to the largest log-weight seen so far
    let mut peak = f64::NEG_INFINITY;
    let mut total = 0.0;
    let mut mean = DVector::zeros(n);

    for (mask, slot) in log_w.iter_mut().enumerate() {
        let size = mask.count_ones() as usize;
        let term = |count: usize, log_p: f64| if count == 0 { 0.0 } else { count as f64 * log_p };
        let log_prior = term(size, log_on) + term(n - size, log_off);
        if log_prior == f64::NEG_INFINITY {
            continue;
        }
        let cols: Vec<usize> = (0..n).filter(|&j| mask >> j & 1 == 1).collect();
        let a_s = a.select_columns(cols.iter());
        let cov = &a_s * a_s.transpose() + DMatrix::identity(k, k) * sigma2;
        let chol =
            Cholesky::new(cov).ok_or_else(|| OasError::Numerical("support covariance not positive definite".into()))?;
        let alpha = chol.solve(y);
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let lw = log_prior - 0.5 * y.dot(&alpha) - 0.5 * log_det;
        *slot = lw;

        if lw > peak {
            let scale = (peak - lw).exp();
            total *= scale;
            mean *= scale;
            peak = lw;
        }
        let w = (lw - peak).exp();
        total += w;
        for (v, &j) in a_s.tr_mul(&alpha).iter().zip(&cols) {
            mean[j] += w * v;
        }
    }

    mean /= total;
    let weights: Vec<f64> = log_w.iter().map(|&l| (l - peak).exp() / total).collect();
    Ok(SupportPosterior { weights, mean })
}

/// Exact posterior mean under the Bernoulli-Gaussian prior, for `N <= 20`.
pub fn mmse_exact_small(a: &DMatrix<f64>, y: &DVector<f64>, rho: f64, sigma2: f64) -> Result<DVector<f64>> {
    support_posterior(a, y, rho, sigma2).map(|p| p.mean)
}
