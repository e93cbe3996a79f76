//! Scalar Bayesian posterior moments under a Gaussian likelihood
//! `exp(-(y - u)^2 / 2 sigma^2)`.
//!
//! Two routes are provided: a closed form for the Bernoulli-Gaussian prior
//! and a quadrature route for any prior made of a point mass at zero plus a
//! continuous part. The latter serves as an independent check on the former
//! and lets experiments use other priors.

use std::f64::consts::PI;

use quadrature::double_exponential;
use serde::{Deserialize, Serialize};

use crate::error::{OasError, Result};

/// Bernoulli-Gaussian prior `q(x) = (1 - rho) delta(x) + rho N(x; 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseGaussianPrior {
    rho: f64,
}

impl SparseGaussianPrior {
    pub fn new(rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(OasError::invalid(format!(
                "sparsity factor must lie in [0, 1] (got {rho})"
            )));
        }
        Ok(SparseGaussianPrior { rho })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn moments(&self, y: f64, sigma2: f64) -> Result<PosteriorMoments> {
        sparse_gaussian_moments(y, sigma2, self.rho)
    }
}

/// Posterior mean (the soft estimate) and posterior variance (the
/// distortion) of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorMoments {
    pub mean: f64,
    pub variance: f64,
}

fn check_observation(y: f64, sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(OasError::invalid(format!(
            "noise variance must be positive and finite (got {sigma2})"
        )));
    }
    if !y.is_finite() {
        return Err(OasError::invalid(format!("observation must be finite (got {y})")));
    }
    Ok(())
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Closed-form posterior mean `G(y|s2)` and variance `E(y|s2)` for the
/// Bernoulli-Gaussian prior.
///
/// With `I0 = (1-rho) sqrt(1+s2) exp(-y^2/2s2)`,
/// `I1 = rho sqrt(s2) exp(-y^2/2(1+s2))` and `J = (1+s2)(I0+I1)`:
/// `G = I1 y / J` and `E = (I1/J)(s2 + (I0/J) y^2)`. The ratios
/// `I_k / (I0 + I1)` are formed from log-weights so that large `|y|/s`
/// does not underflow both terms.
pub fn sparse_gaussian_moments(y: f64, sigma2: f64, rho: f64) -> Result<PosteriorMoments> {
    check_observation(y, sigma2)?;
    if !(0.0..=1.0).contains(&rho) {
        return Err(OasError::invalid(format!(
            "sparsity factor must lie in [0, 1] (got {rho})"
        )));
    }
    let y2 = y * y;
    let log_i0 = (1.0 - rho).ln() + 0.5 * sigma2.ln_1p() - y2 / (2.0 * sigma2);
    let log_i1 = rho.ln() + 0.5 * sigma2.ln() - y2 / (2.0 * (1.0 + sigma2));
    let log_sum = log_add_exp(log_i0, log_i1);
    // posterior probabilities of the zero and Gaussian branches
    let p1 = (log_i1 - log_sum).exp();
    let p0 = (log_i0 - log_sum).exp();
    let shrink = 1.0 + sigma2;
    Ok(PosteriorMoments {
        mean: p1 * y / shrink,
        variance: p1 / shrink * (sigma2 + p0 * y2 / shrink),
    })
}

/// A scalar prior with an optional atom at zero and a continuous part.
pub trait ScalarPrior {
    /// Probability of exactly zero.
    fn zero_mass(&self) -> f64;

    /// Log density of the continuous part, weight included, so that it
    /// integrates to `1 - zero_mass()`.
    fn continuous_log_density(&self, u: f64) -> f64;

    /// An interval holding all but a negligible fraction of the continuous
    /// mass.
    fn continuous_support(&self) -> (f64, f64);

    /// A lower bound on the width of features of the continuous density;
    /// used to size the quadrature window around the posterior mode.
    fn continuous_scale(&self) -> f64;
}

impl ScalarPrior for SparseGaussianPrior {
    fn zero_mass(&self) -> f64 {
        1.0 - self.rho
    }

    fn continuous_log_density(&self, u: f64) -> f64 {
        self.rho.ln() - 0.5 * u * u - 0.5 * (2.0 * PI).ln()
    }

    fn continuous_support(&self) -> (f64, f64) {
        (-14.0, 14.0)
    }

    fn continuous_scale(&self) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Point mass at zero plus a finite Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePrior {
    zero_mass: f64,
    components: Vec<GaussianComponent>,
}

impl MixturePrior {
    pub fn new(zero_mass: f64, components: Vec<GaussianComponent>) -> Result<Self> {
        if !(0.0..=1.0).contains(&zero_mass) {
            return Err(OasError::invalid("zero mass must lie in [0, 1]"));
        }
        for c in &components {
            if !(c.weight >= 0.0) || !(c.variance > 0.0) || !c.mean.is_finite() {
                return Err(OasError::invalid(format!("bad mixture component {c:?}")));
            }
        }
        let total = zero_mass + components.iter().map(|c| c.weight).sum::<f64>();
        if (total - 1.0).abs() > 1e-9 {
            return Err(OasError::invalid(format!("prior weights sum to {total}, not 1")));
        }
        Ok(MixturePrior { zero_mass, components })
    }

    pub fn point_mass_at_zero() -> Self {
        MixturePrior {
            zero_mass: 1.0,
            components: Vec::new(),
        }
    }

    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        Self::new(
            0.0,
            vec![GaussianComponent {
                weight: 1.0,
                mean,
                variance,
            }],
        )
    }

    pub fn sparse_gaussian(rho: f64) -> Result<Self> {
        Self::new(
            1.0 - rho,
            vec![GaussianComponent {
                weight: rho,
                mean: 0.0,
                variance: 1.0,
            }],
        )
    }
}

impl ScalarPrior for MixturePrior {
    fn zero_mass(&self) -> f64 {
        self.zero_mass
    }

    fn continuous_log_density(&self, u: f64) -> f64 {
        self.components
            .iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| c.weight.ln() - 0.5 * (2.0 * PI * c.variance).ln() - (u - c.mean).powi(2) / (2.0 * c.variance))
            .fold(f64::NEG_INFINITY, log_add_exp)
    }

    fn continuous_support(&self) -> (f64, f64) {
        self.components.iter().fold((0.0, 0.0), |(lo, hi), c| {
            let half = 14.0 * c.variance.sqrt();
            (f64::min(lo, c.mean - half), f64::max(hi, c.mean + half))
        })
    }

    fn continuous_scale(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.variance.sqrt())
            .fold(f64::INFINITY, f64::min)
    }
}

const MODE_GRID: usize = 4001;
const PANEL_WIDTHS: f64 = 7.0;
const MAX_PANELS: usize = 20_000;
const QUAD_TOL: f64 = 1e-14;

/// Posterior mean and variance of `u` given `y = u + N(0, sigma2)` under an
/// arbitrary [`ScalarPrior`], by numerical integration.
///
/// The atom at zero enters analytically. The continuous part is integrated
/// with double-exponential quadrature after locating the posterior mode on a
/// grid; the integrand is rescaled by its peak so nothing underflows. The
/// support is split into panels a few multiples of `min(sigma, prior scale)`
/// wide, so separated modes each land in a panel of their own size.
pub fn generic_posterior_moments(y: f64, sigma2: f64, prior: &dyn ScalarPrior) -> Result<PosteriorMoments> {
    check_observation(y, sigma2)?;
    let w0 = prior.zero_mass();
    let log_atom = w0.ln() - y * y / (2.0 * sigma2);
    if w0 >= 1.0 {
        return Ok(PosteriorMoments {
            mean: 0.0,
            variance: 0.0,
        });
    }

    let sigma = sigma2.sqrt();
    let log_post = |u: f64| -(y - u).powi(2) / (2.0 * sigma2) + prior.continuous_log_density(u);

    let (s_lo, s_hi) = prior.continuous_support();
    let lo = s_lo.min(y - 14.0 * sigma);
    let hi = s_hi.max(y + 14.0 * sigma);
    let mode = locate_mode(&log_post, lo, hi);
    let peak = log_post(mode);
    if !peak.is_finite() {
        return Err(OasError::Numerical(format!(
            "posterior density vanishes on [{lo}, {hi}] for y={y}, sigma2={sigma2}"
        )));
    }

    let width = PANEL_WIDTHS * sigma.min(prior.continuous_scale());
    let panels = ((hi - lo) / width).ceil().clamp(1.0, MAX_PANELS as f64) as usize;
    let step = (hi - lo) / panels as f64;
    let mut cuts: Vec<f64> = (0..=panels).map(|i| lo + step * i as f64).collect();
    cuts.push(mode);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let integrate = |g: &dyn Fn(f64) -> f64| -> Result<f64> {
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let out = double_exponential::integrate(g, w[0], w[1], QUAD_TOL);
            if !out.integral.is_finite() || out.error_estimate > 1e-8 * out.integral.abs().max(1e-300) + 1e-12 {
                return Err(OasError::Numerical(format!(
                    "quadrature did not converge on [{}, {}] (error estimate {:.3e})",
                    w[0], w[1], out.error_estimate
                )));
            }
            total += out.integral;
        }
        Ok(total)
    };

    let weight = |u: f64| (log_post(u) - peak).exp();
    let z = integrate(&|u| weight(u))?;
    let mean_c = mode + integrate(&|u| (u - mode) * weight(u))? / z;
    let var_c = integrate(&|u| (u - mean_c).powi(2) * weight(u))? / z;

    let log_cont = peak + z.ln();
    let log_total = log_add_exp(log_atom, log_cont);
    let p_cont = (log_cont - log_total).exp();
    let p_atom = (log_atom - log_total).exp();
    Ok(PosteriorMoments {
        mean: p_cont * mean_c,
        variance: p_cont * var_c + p_cont * p_atom * mean_c * mean_c,
    })
}

fn locate_mode(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let step = (hi - lo) / (MODE_GRID - 1) as f64;
    let (best, _) = (0..MODE_GRID)
        .map(|i| (i, f(lo + step * i as f64)))
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
        );
    // golden-section refinement over the two neighbouring cells
    let mut a = lo + step * best.saturating_sub(1) as f64;
    let mut b = (lo + step * (best + 1) as f64).min(hi);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
