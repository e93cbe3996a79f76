//! The adaptive subframe loop.
//!
//! Each of the `M` subframes targets the `L` samples with the largest
//! posterior distortion, senses with `K` codewords, cancels the
//! contribution of the untargeted samples using their current estimates,
//! decouples the targets with the least-squares filter and folds the result
//! into per-sample statistics before a scalar posterior update.

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

use crate::codebook::{Codebook, SensingMatrix};
use crate::error::{OasError, Result};
use crate::estimators::SparseGaussianPrior;
use crate::linalg::{sel, LeastSquaresFilter, SelectorMatrix};
use crate::rng::{derive_seed, seeded_rng};
use crate::selection::{self, SelectionStrategy};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OasConfig {
    /// Signal length `N`.
    pub n: usize,
    /// Codewords sensed per subframe `K`.
    pub k: usize,
    /// Samples targeted per subframe `L <= K`.
    pub l: usize,
    /// Number of subframes `M`.
    pub m: usize,
    /// Noise variance over the whole frame; each subframe sees `M` times it.
    pub sigma2_frame: f64,
    /// Postulated prior used by the estimator.
    pub prior: SparseGaussianPrior,
    pub strategy: SelectionStrategy,
}

impl OasConfig {
    pub fn subframe_noise_variance(&self) -> f64 {
        self.m as f64 * self.sigma2_frame
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(OasError::invalid("N and M must be at least 1"));
        }
        if self.l == 0 || self.l > self.k {
            return Err(OasError::invalid(format!(
                "need 1 <= L <= K (got L={}, K={})",
                self.l, self.k
            )));
        }
        if self.l > self.n {
            return Err(OasError::invalid(format!(
                "need L <= N (got L={}, N={})",
                self.l, self.n
            )));
        }
        if !(self.sigma2_frame > 0.0) || !self.sigma2_frame.is_finite() {
            return Err(OasError::invalid("frame noise variance must be positive"));
        }
        Ok(())
    }

    pub fn validate_with(&self, codebook: &Codebook) -> Result<()> {
        self.validate()?;
        if codebook.dim() != self.n {
            return Err(OasError::invalid(format!(
                "codebook dimension {} does not match N={}",
                codebook.dim(),
                self.n
            )));
        }
        if codebook.size() < self.k {
            return Err(OasError::invalid(format!(
                "codebook has {} vectors but K={} are needed",
                codebook.size(),
                self.k
            )));
        }
        Ok(())
    }
}

/// Running per-sample beliefs.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    /// Sum of decoupled observations of each sample.
    pub statistic: Vec<f64>,
    /// Sum of the decoupled noise variances behind `statistic`.
    pub noise_variance: Vec<f64>,
    pub estimate: DVector<f64>,
    /// Posterior variance, `+inf` until the sample is first sensed.
    pub distortion: Vec<f64>,
    /// Number of subframes in which the sample was targeted.
    pub count: Vec<usize>,
}

impl BeliefState {
    pub fn new(n: usize) -> Self {
        BeliefState {
            statistic: vec![0.0; n],
            noise_variance: vec![0.0; n],
            estimate: DVector::zeros(n),
            distortion: vec![f64::INFINITY; n],
            count: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.count.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count.is_empty()
    }

    /// Adds one decoupled observation of sample `n` with noise variance
    /// `variance` and refreshes its posterior from the count-normalized
    /// statistic `y_n / |M_n|` and variance `sigma_n^2 / |M_n|^2`.
    pub fn observe(&mut self, n: usize, observation: f64, variance: f64, prior: &SparseGaussianPrior) -> Result<()> {
        self.statistic[n] += observation;
        self.noise_variance[n] += variance;
        self.count[n] += 1;
        let c = self.count[n] as f64;
        let post = prior.moments(self.statistic[n] / c, self.noise_variance[n] / (c * c))?;
        self.estimate[n] = post.mean;
        self.distortion[n] = post.variance;
        Ok(())
    }
}

/// Worst-case adaptation: the `l` samples with the largest posterior
/// distortion, never-sensed samples first, ties to the lower index.
pub fn worst_case_select(beliefs: &BeliefState, l: usize) -> Result<Vec<usize>> {
    if l == 0 || l > beliefs.len() {
        return Err(OasError::invalid(format!(
            "cannot target {l} of {} samples",
            beliefs.len()
        )));
    }
    let d = &beliefs.distortion;
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(a.cmp(&b)));
    order.truncate(l);
    Ok(order)
}

/// Decoupled observations of one subframe.
#[derive(Debug, Clone)]
pub struct Decoupled {
    /// `F (y - W x_tilde)`, one entry per target.
    pub observations: DVector<f64>,
    /// `||f_l||^2` for each row of the filter.
    pub noise_scale: Vec<f64>,
    pub condition: f64,
}

/// Cancels the untargeted samples with their current estimates and applies
/// the left inverse of `Q = A P^T` to what remains.
pub fn decouple_subframe(
    sensing: &SensingMatrix,
    targets: &SelectorMatrix,
    x_hat: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<Decoupled> {
    let a = sensing.matrix();
    if y.len() != a.nrows() || x_hat.len() != a.ncols() || targets.dim() != a.ncols() {
        return Err(OasError::invalid("decoupling inputs have inconsistent dimensions"));
    }
    let mut residual_estimate = x_hat.clone();
    for &i in targets.indices() {
        residual_estimate[i] = 0.0;
    }
    let cleaned = y - a * residual_estimate;
    let filter = LeastSquaresFilter::new(targets.select_columns(a))?;
    Ok(Decoupled {
        observations: filter.apply(&cleaned),
        noise_scale: filter.row_norms_sq(),
        condition: filter.condition(),
    })
}

/// Folds one subframe's decoupled observations into the beliefs. Samples
/// outside `targets` are left untouched.
pub fn update_beliefs(
    beliefs: &mut BeliefState,
    targets: &SelectorMatrix,
    decoupled: &Decoupled,
    config: &OasConfig,
) -> Result<()> {
    if decoupled.observations.len() != targets.len() || decoupled.noise_scale.len() != targets.len() {
        return Err(OasError::invalid("decoupled observations do not match the target set"));
    }
    let per_subframe = config.subframe_noise_variance();
    for (l, &n) in targets.indices().iter().enumerate() {
        beliefs.observe(
            n,
            decoupled.observations[l],
            per_subframe * decoupled.noise_scale[l],
            &config.prior,
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubframeRecord {
    pub subframe: usize,
    pub targets: Vec<usize>,
    pub source_indices: Vec<usize>,
    pub decoupled: Vec<f64>,
    pub noise_variances: Vec<f64>,
    /// `||A E^T x_tilde||^2` at the observations.
    pub observation_interference: f64,
    /// `||P A^T A E^T x_tilde||^2` on the targets.
    pub projected_interference: f64,
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OasResult {
    pub estimates: DVector<f64>,
    /// Linear MSE after each subframe.
    pub mse_trajectory: Vec<f64>,
    pub records: Vec<SubframeRecord>,
    pub noise_seed: u64,
    pub selection_seed: u64,
}

impl OasResult {
    pub fn final_mse(&self) -> f64 {
        *self.mse_trajectory.last().expect("at least one subframe")
    }

    pub fn final_mse_db(&self) -> f64 {
        to_db(self.final_mse())
    }
}

/// Switches for diagnostic runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Drop the sensing noise.
    pub noiseless: bool,
    /// Cancel interference with the true untargeted samples instead of the
    /// current estimates.
    pub genie_residuals: bool,
}

pub fn run_oas(config: &OasConfig, signal: &DVector<f64>, codebook: &Codebook, noise_seed: u64) -> Result<OasResult> {
    run_oas_with(config, signal, codebook, noise_seed, RunOptions::default())
}

pub fn run_oas_with(
    config: &OasConfig,
    signal: &DVector<f64>,
    codebook: &Codebook,
    noise_seed: u64,
    options: RunOptions,
) -> Result<OasResult> {
    config.validate_with(codebook)?;
    if signal.len() != config.n {
        return Err(OasError::invalid(format!(
            "signal length {} does not match N={}",
            signal.len(),
            config.n
        )));
    }
    let noise_sd = config.subframe_noise_variance().sqrt();
    let mut noise_rng = seeded_rng(noise_seed);
    let mut beliefs = BeliefState::new(config.n);
    let mut trajectory = Vec::with_capacity(config.m);
    let mut records = Vec::with_capacity(config.m);

    for m in 0..config.m {
        let targets = sel(&worst_case_select(&beliefs, config.l)?, config.n)?;
        let source = config.strategy.select(
            codebook,
            config.k,
            &targets,
            &beliefs.estimate,
            derive_seed(config.strategy.seed, &[m as u64]),
        )?;
        let sensing = codebook.sensing_matrix(&source)?;

        let mut y = sensing.matrix() * signal;
        for v in y.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            if !options.noiseless {
                *v += noise_sd * z;
            }
        }

        let reference = if options.genie_residuals {
            signal
        } else {
            &beliefs.estimate
        };
        let terms = selection::interference_terms(codebook, &targets, reference);
        let observation_interference = selection::observation_interference(&terms, &source);
        let projected_interference = selection::projected_interference(codebook, &targets, &terms, &source);

        let decoupled = decouple_subframe(&sensing, &targets, reference, &y).map_err(|e| match e {
            OasError::SingularMatrix { condition } => OasError::SingularSubframe {
                subframe: m,
                source_indices: source.clone(),
                condition,
            },
            other => other,
        })?;
        update_beliefs(&mut beliefs, &targets, &decoupled, config)?;

        trajectory.push(mse(signal, &beliefs.estimate));
        records.push(SubframeRecord {
            subframe: m,
            targets: targets.indices().to_vec(),
            source_indices: source,
            noise_variances: decoupled
                .noise_scale
                .iter()
                .map(|s| s * config.subframe_noise_variance())
                .collect(),
            decoupled: decoupled.observations.iter().copied().collect(),
            observation_interference,
            projected_interference,
            condition: decoupled.condition,
        });
    }

    Ok(OasResult {
        estimates: beliefs.estimate,
        mse_trajectory: trajectory,
        records,
        noise_seed,
        selection_seed: config.strategy.seed,
    })
}

/// `(1/N) sum (x_n - x_hat_n)^2`
pub fn mse(x: &DVector<f64>, x_hat: &DVector<f64>) -> f64 {
    assert_eq!(x.len(), x_hat.len(), "mse of vectors with different lengths");
    (x - x_hat).norm_squared() / x.len() as f64
}

/// MSE in dB; an exact reconstruction gives `-inf`.
pub fn mse_db(x: &DVector<f64>, x_hat: &DVector<f64>) -> f64 {
    to_db(mse(x, x_hat))
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::generate_codebook;
    use crate::selection::StrategyKind;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn beliefs_with(d: &[f64]) -> BeliefState {
        let mut b = BeliefState::new(d.len());
        b.distortion = d.to_vec();
        b
    }

    #[test]
    fn worst_case_sentinel_dominates() {
        let b = beliefs_with(&[f64::INFINITY, 0.5, f64::INFINITY, 0.1]);
        assert_eq!(worst_case_select(&b, 2).unwrap(), vec![0, 2]);
    }

    #[test]
    fn worst_case_ties_to_lower_index() {
        let b = beliefs_with(&[0.3, 0.3, 0.1]);
        assert_eq!(worst_case_select(&b, 1).unwrap(), vec![0]);
    }

    #[test]
    fn worst_case_top_two() {
        let b = beliefs_with(&[0.1, 0.9, 0.5, 0.7]);
        assert_eq!(worst_case_select(&b, 2).unwrap(), vec![1, 3]);
        assert!(worst_case_select(&b, 0).is_err());
        assert!(worst_case_select(&b, 5).is_err());
    }

    #[test]
    fn mse_db_values() {
        let x = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(mse_db(&x, &x), f64::NEG_INFINITY);
        assert_abs_diff_eq!(
            mse_db(&DVector::from_vec(vec![1.0]), &DVector::from_vec(vec![0.0])),
            0.0
        );
        assert_abs_diff_eq!(mse_db(&x, &DVector::zeros(2)), -3.010_299_956_639_812, epsilon = 1e-12);
    }

    fn config(n: usize, k: usize, l: usize, m: usize, sigma2: f64, rho: f64) -> OasConfig {
        OasConfig {
            n,
            k,
            l,
            m,
            sigma2_frame: sigma2,
            prior: SparseGaussianPrior::new(rho).unwrap(),
            strategy: SelectionStrategy::new(StrategyKind::Random, 3),
        }
    }

    #[test]
    fn first_observation_uses_raw_values() {
        let cfg = config(3, 3, 1, 1, 0.1, 0.2);
        let mut b = BeliefState::new(3);
        b.observe(1, 0.4, 0.05, &cfg.prior).unwrap();
        let expected = cfg.prior.moments(0.4, 0.05).unwrap();
        assert_eq!(b.statistic[1], 0.4);
        assert_eq!(b.noise_variance[1], 0.05);
        assert_eq!(b.count[1], 1);
        assert_eq!((b.estimate[1], b.distortion[1]), (expected.mean, expected.variance));
    }

    #[test]
    fn repeated_observations_average() {
        let prior = SparseGaussianPrior::new(0.2).unwrap();
        let mut b = BeliefState::new(2);
        b.observe(0, 0.4, 0.05, &prior).unwrap();
        b.observe(0, 0.6, 0.05, &prior).unwrap();
        let expected = prior.moments(0.5, 0.025).unwrap();
        assert_abs_diff_eq!(b.estimate[0], expected.mean, epsilon = 1e-15);
        assert_abs_diff_eq!(b.distortion[0], expected.variance, epsilon = 1e-15);
    }

    #[test]
    fn update_leaves_untargeted_samples_alone() {
        let cfg = config(4, 2, 2, 3, 0.01, 0.1);
        let mut b = BeliefState::new(4);
        b.observe(3, 1.0, 0.1, &cfg.prior).unwrap();
        let before = b.clone();
        let targets = sel(&[0, 2], 4).unwrap();
        let dec = Decoupled {
            observations: DVector::from_vec(vec![0.3, -0.2]),
            noise_scale: vec![1.0, 2.0],
            condition: 1.0,
        };
        update_beliefs(&mut b, &targets, &dec, &cfg).unwrap();
        for n in [1, 3] {
            assert_eq!(b.statistic[n], before.statistic[n]);
            assert_eq!(b.noise_variance[n], before.noise_variance[n]);
            assert_eq!(b.estimate[n], before.estimate[n]);
            assert_eq!(b.distortion[n], before.distortion[n]);
            assert_eq!(b.count[n], before.count[n]);
        }
        // M * ||f||^2 * sigma^2
        assert_abs_diff_eq!(b.noise_variance[2], 3.0 * 2.0 * 0.01, epsilon = 1e-15);
    }

    #[test]
    fn identity_sensing_decouples_trivially() {
        let a = Codebook::from_rows(DMatrix::identity(4, 4), 1.0, 0).unwrap();
        let sensing = a.sensing_matrix(&[0, 1, 2, 3]).unwrap();
        let targets = sel(&[0, 1, 2, 3], 4).unwrap();
        let y = DVector::from_vec(vec![0.5, -1.0, 2.0, 0.25]);
        let dec = decouple_subframe(&sensing, &targets, &DVector::zeros(4), &y).unwrap();
        assert_abs_diff_eq!(dec.observations, y, epsilon = 1e-14);
    }

    #[test]
    fn noise_free_identity_recovers_signal() {
        let mut rows = DMatrix::zeros(6, 4);
        rows.view_mut((0, 0), (4, 4)).copy_from(&DMatrix::identity(4, 4));
        rows.row_mut(4).fill(0.3);
        rows.row_mut(5).fill(-0.7);
        let cb = Codebook::from_rows(rows, 1.0, 0).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.0, -2.0, 0.0]);
        let mut cfg = config(4, 4, 4, 1, 1e-9, 0.5);
        cfg.strategy = SelectionStrategy::new(StrategyKind::Exhaustive { max_subsets: 100 }, 0);
        let out = run_oas(&cfg, &x, &cb, 1).unwrap();
        assert_eq!(out.records[0].source_indices, vec![0, 1, 2, 3]);
        for n in 0..4 {
            assert!((out.estimates[n] - x[n]).abs() < 1e-3, "{}", out.estimates);
        }
    }

    #[test]
    fn trajectory_is_consistent_and_deterministic() {
        let cb = generate_codebook(60, 20, 0.1, 5).unwrap();
        let x = DVector::from_fn(20, |i, _| if i % 4 == 0 { 1.0 } else { 0.0 });
        let cfg = config(20, 10, 5, 6, 0.01, 0.25);
        let a = run_oas(&cfg, &x, &cb, 42).unwrap();
        let b = run_oas(&cfg, &x, &cb, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mse_trajectory.len(), 6);
        assert!((a.final_mse() - mse(&x, &a.estimates)).abs() <= 1e-12);
        for r in &a.records {
            assert_eq!(r.targets.len(), 5);
            assert!(r.noise_variances.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn rejects_incompatible_inputs() {
        let cb = generate_codebook(8, 5, 0.1, 5).unwrap();
        let x = DVector::zeros(5);
        assert!(run_oas(&config(5, 9, 2, 2, 0.01, 0.1), &x, &cb, 0).is_err());
        assert!(run_oas(&config(5, 4, 5, 2, 0.01, 0.1), &x, &cb, 0).is_err());
        assert!(run_oas(&config(6, 4, 2, 2, 0.01, 0.1), &DVector::zeros(6), &cb, 0).is_err());
        assert!(run_oas(&config(5, 4, 2, 2, 0.0, 0.1), &x, &cb, 0).is_err());
    }

    #[test]
    fn singular_subframe_reports_context() {
        // two identical codewords cannot resolve two targets
        let rows = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let cb = Codebook::from_rows(rows, 1.0, 0).unwrap();
        let cfg = config(2, 2, 2, 1, 0.01, 0.5);
        match run_oas(&cfg, &DVector::zeros(2), &cb, 0) {
            Err(OasError::SingularSubframe {
                subframe,
                source_indices,
                ..
            }) => {
                assert_eq!(subframe, 0);
                assert_eq!(source_indices.len(), 2);
            }
            other => panic!("expected singular subframe, got {other:?}"),
        }
    }
}
