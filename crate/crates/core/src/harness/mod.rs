//! Monte Carlo experiment driver.
//!
//! An [`ExperimentSpec`] names a base configuration, one swept parameter,
//! the methods to compare and a trial count. Every `(value, method)` pair is
//! a cell; trial `t` of cell `c` draws all of its randomness from
//! `derive_seed(master, [c, t])`, so a sweep is reproducible bit-for-bit no
//! matter how many workers run it.

pub mod output;
pub mod reference;

use std::borrow::Cow;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{default_lambda_grid, lasso_oracle_mse, mmse_exact_small, LassoOracle, OneShotInstance};
use crate::codebook::{generate_codebook, Codebook};
use crate::engine::{mse, run_oas, to_db, OasConfig, OasResult};
use crate::error::{OasError, Result};
use crate::estimators::SparseGaussianPrior;
use crate::rng::{derive_seed, seeded_rng, stream};
use crate::selection::{binomial, SelectionStrategy, StrategyKind, DEFAULT_EXHAUSTIVE_BUDGET};

pub use output::{emit_results, OutputFormat, SweepResult, SweepRow, NEG_INF_DB};
pub use reference::{reference_level, ReferenceLevel, REFERENCE_LEVELS};

pub const DEFAULT_TRIALS: usize = 200;
/// Fresh selection seeds tried after a singular subframe before a trial is
/// counted as failed.
pub const MAX_RESAMPLES: u64 = 3;
/// A cell with more than this fraction of failed trials is invalid.
pub const MAX_FAILED_FRACTION: f64 = 0.1;

/// I.i.d. Bernoulli(`rho`) x N(0, 1) samples.
pub fn generate_signal(n: usize, rho: f64, seed: u64) -> Result<DVector<f64>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(OasError::invalid(format!(
            "sparsity factor must lie in [0, 1] (got {rho})"
        )));
    }
    let mut rng = seeded_rng(seed);
    Ok(DVector::from_iterator(
        n,
        (0..n).map(|_| {
            let active: f64 = rng.random();
            let value: f64 = rng.sample(StandardNormal);
            if active < rho {
                value
            } else {
                0.0
            }
        }),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceRule {
    /// `1 / K`: unit expected squared norm per measurement column.
    InverseK,
    /// `1 / sqrt(K)`
    InverseSqrtK,
}

/// Codebook entry variance, either explicit or tied to `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EntryVariance {
    Fixed(f64),
    Rule(VarianceRule),
}

impl Default for EntryVariance {
    fn default() -> Self {
        EntryVariance::Rule(VarianceRule::InverseK)
    }
}

impl EntryVariance {
    pub fn resolve(&self, k: usize) -> f64 {
        match *self {
            EntryVariance::Fixed(v) => v,
            EntryVariance::Rule(VarianceRule::InverseK) => 1.0 / k as f64,
            EntryVariance::Rule(VarianceRule::InverseSqrtK) => 1.0 / (k as f64).sqrt(),
        }
    }
}

fn default_budget() -> u64 {
    DEFAULT_EXHAUSTIVE_BUDGET
}

fn default_grid_points() -> usize {
    crate::baselines::DEFAULT_LAMBDA_POINTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseConfig {
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub m: usize,
    pub s: usize,
    /// Frame noise variance.
    pub sigma2: f64,
    /// Sparsity factor assumed by the estimators.
    pub rho: f64,
    /// Sparsity factor of the generated signals; defaults to `rho`.
    #[serde(default)]
    pub signal_rho: Option<f64>,
    #[serde(default)]
    pub entry_variance: EntryVariance,
    #[serde(default = "default_budget")]
    pub exhaustive_budget: u64,
    #[serde(default = "default_grid_points")]
    pub lasso_grid_points: usize,
}

impl Default for BaseConfig {
    fn default() -> Self {
        BaseConfig {
            n: 200,
            k: 200,
            l: 73,
            m: 80,
            s: 1000,
            sigma2: 0.01,
            rho: 0.1,
            signal_rho: None,
            entry_variance: EntryVariance::default(),
            exhaustive_budget: DEFAULT_EXHAUSTIVE_BUDGET,
            lasso_grid_points: default_grid_points(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweptParam {
    L,
    S,
    M,
    /// Compression rate `N / K`.
    R,
}

impl SweptParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweptParam::L => "L",
            SweptParam::S => "S",
            SweptParam::M => "M",
            SweptParam::R => "R",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: SweptParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineToggles {
    /// Empirical LASSO with the best penalty on a grid, per trial.
    #[serde(default)]
    pub lasso: bool,
    /// Exact posterior mean by support enumeration (`N <= 20`).
    #[serde(default)]
    pub mmse_exact: bool,
    /// Tabulated large-system LASSO/MMSE levels, where available.
    #[serde(default)]
    pub reference: bool,
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

fn default_strategies() -> Vec<String> {
    vec!["random".to_string()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub base: BaseConfig,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<String>,
    #[serde(default)]
    pub baselines: BaselineToggles,
    #[serde(default)]
    pub master_seed: u64,
    /// Reuse one codebook per swept value instead of drawing one per trial.
    #[serde(default)]
    pub fixed_codebook: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            base: BaseConfig::default(),
            sweep: None,
            trials: DEFAULT_TRIALS,
            strategies: default_strategies(),
            baselines: BaselineToggles::default(),
            master_seed: 0,
            fixed_codebook: false,
            output: None,
            format: OutputFormat::Csv,
        }
    }
}

/// A method compared in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Oas(StrategyKind),
    Lasso,
    MmseExact,
    LassoReference,
    MmseReference,
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Oas(kind) => format!("oas_{}", kind.name()),
            Method::Lasso => "lasso".into(),
            Method::MmseExact => "mmse_exact".into(),
            Method::LassoReference => "lasso_reference".into(),
            Method::MmseReference => "mmse_reference".into(),
        }
    }
}

/// Fully resolved parameters of one swept value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellConfig {
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub m: usize,
    pub s: usize,
    pub sigma2: f64,
    pub rho: f64,
    pub signal_rho: f64,
    pub entry_variance: f64,
    pub exhaustive_budget: u64,
    pub lasso_grid_points: usize,
}

impl CellConfig {
    pub fn from_base(base: &BaseConfig) -> Self {
        CellConfig {
            n: base.n,
            k: base.k,
            l: base.l,
            m: base.m,
            s: base.s,
            sigma2: base.sigma2,
            rho: base.rho,
            signal_rho: base.signal_rho.unwrap_or(base.rho),
            entry_variance: base.entry_variance.resolve(base.k),
            exhaustive_budget: base.exhaustive_budget,
            lasso_grid_points: base.lasso_grid_points,
        }
    }

    pub fn oas_config(&self, kind: StrategyKind, selection_seed: u64) -> Result<OasConfig> {
        let kind = match kind {
            StrategyKind::Exhaustive { .. } => StrategyKind::Exhaustive {
                max_subsets: self.exhaustive_budget,
            },
            other => other,
        };
        Ok(OasConfig {
            n: self.n,
            k: self.k,
            l: self.l,
            m: self.m,
            sigma2_frame: self.sigma2,
            prior: SparseGaussianPrior::new(self.rho)?,
            strategy: SelectionStrategy::new(kind, selection_seed),
        })
    }

    fn validate(&self, methods: &[Method]) -> Result<()> {
        let bad = |msg: String| Err(OasError::Config(msg));
        if self.n == 0 || self.m == 0 {
            return bad("N and M must be at least 1".into());
        }
        if self.l == 0 || self.l > self.k || self.l > self.n {
            return bad(format!(
                "need 1 <= L <= min(K, N) (L={}, K={}, N={})",
                self.l, self.k, self.n
            ));
        }
        if self.k > self.s {
            return bad(format!("need K <= S (K={}, S={})", self.k, self.s));
        }
        if !(self.sigma2 > 0.0) {
            return bad("sigma2 must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.rho) || !(0.0..=1.0).contains(&self.signal_rho) {
            return bad("sparsity factors must lie in [0, 1]".into());
        }
        if !(self.entry_variance > 0.0) {
            return bad("codebook entry variance must be positive".into());
        }
        for method in methods {
            match method {
                Method::Oas(StrategyKind::Exhaustive { .. }) => {
                    let subsets = binomial(self.s, self.k);
                    if subsets > self.exhaustive_budget as u128 {
                        return Err(OasError::BudgetExceeded {
                            subsets,
                            budget: self.exhaustive_budget,
                        });
                    }
                }
                Method::MmseExact if self.n > crate::baselines::MAX_EXACT_MMSE_DIM => {
                    return bad(format!(
                        "exact MMSE is limited to N <= {} (N={})",
                        crate::baselines::MAX_EXACT_MMSE_DIM,
                        self.n
                    ));
                }
                Method::Lasso if self.lasso_grid_points == 0 => {
                    return bad("lasso_grid_points must be at least 1".into());
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn as_count(param: SweptParam, value: f64) -> Result<usize> {
    if value >= 1.0 && value.fract() == 0.0 && value < u32::MAX as f64 {
        Ok(value as usize)
    } else {
        Err(OasError::Config(format!(
            "swept {} value {value} is not a positive integer",
            param.name()
        )))
    }
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| OasError::Config(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| OasError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| OasError::Config(format!("{}: {e}", path.display())))
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        let mut methods = Vec::new();
        for name in &self.strategies {
            methods.push(Method::Oas(StrategyKind::parse(name)?));
        }
        if self.baselines.lasso {
            methods.push(Method::Lasso);
        }
        if self.baselines.mmse_exact {
            methods.push(Method::MmseExact);
        }
        if self.baselines.reference {
            methods.push(Method::LassoReference);
            methods.push(Method::MmseReference);
        }
        if methods.is_empty() {
            return Err(OasError::Config("no strategies or baselines selected".into()));
        }
        Ok(methods)
    }

    /// `(swept parameter name, value, resolved configuration)` per value.
    pub fn cells(&self) -> Result<Vec<(&'static str, f64, CellConfig)>> {
        let Some(sweep) = &self.sweep else {
            return Ok(vec![("none", 0.0, CellConfig::from_base(&self.base))]);
        };
        if sweep.values.is_empty() {
            return Err(OasError::Config("sweep has no values".into()));
        }
        sweep
            .values
            .iter()
            .map(|&v| {
                let mut base = self.base.clone();
                match sweep.param {
                    SweptParam::L => base.l = as_count(sweep.param, v)?,
                    SweptParam::S => base.s = as_count(sweep.param, v)?,
                    SweptParam::M => base.m = as_count(sweep.param, v)?,
                    SweptParam::R => {
                        if !(v > 0.0) {
                            return Err(OasError::Config(format!("compression rate {v} must be positive")));
                        }
                        base.k = (base.n as f64 / v).round() as usize;
                    }
                }
                Ok((sweep.param.name(), v, CellConfig::from_base(&base)))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(OasError::Config("trials must be at least 1".into()));
        }
        let methods = self.methods()?;
        for (_, _, cell) in self.cells()? {
            cell.validate(&methods)?;
        }
        Ok(())
    }
}

fn trial_signal(cell: &CellConfig, trial_seed: u64) -> Result<DVector<f64>> {
    generate_signal(cell.n, cell.signal_rho, derive_seed(trial_seed, &[stream::SIGNAL]))
}

fn trial_codebook<'a>(cell: &CellConfig, trial_seed: u64, fixed: Option<&'a Codebook>) -> Result<Cow<'a, Codebook>> {
    match fixed {
        Some(cb) => Ok(Cow::Borrowed(cb)),
        None => generate_codebook(
            cell.s,
            cell.n,
            cell.entry_variance,
            derive_seed(trial_seed, &[stream::CODEBOOK]),
        )
        .map(Cow::Owned),
    }
}

/// Outcome of one adaptive trial together with its signal.
#[derive(Debug, Clone)]
pub struct OasTrial {
    pub signal: DVector<f64>,
    pub result: OasResult,
    /// Selection reseeds spent on singular subframes.
    pub resamples: u64,
}

/// One adaptive trial. A singular subframe restarts the trial with a fresh
/// selection seed (same signal, codebook and noise) up to
/// [`MAX_RESAMPLES`] times.
pub fn run_oas_trial(
    cell: &CellConfig,
    kind: StrategyKind,
    trial_seed: u64,
    fixed_codebook: Option<&Codebook>,
) -> Result<OasTrial> {
    let signal = trial_signal(cell, trial_seed)?;
    let codebook = trial_codebook(cell, trial_seed, fixed_codebook)?;
    let noise_seed = derive_seed(trial_seed, &[stream::NOISE]);
    let mut attempt = 0;
    loop {
        let config = cell.oas_config(kind, derive_seed(trial_seed, &[stream::SELECTION, attempt]))?;
        match run_oas(&config, &signal, &codebook, noise_seed) {
            Ok(result) => {
                return Ok(OasTrial {
                    signal,
                    result,
                    resamples: attempt,
                })
            }
            Err(OasError::SingularSubframe { .. }) if attempt < MAX_RESAMPLES => attempt += 1,
            Err(e) => return Err(e),
        }
    }
}

/// The one-shot instance behind the baselines of a trial.
pub fn baseline_instance(
    cell: &CellConfig,
    trial_seed: u64,
    fixed_codebook: Option<&Codebook>,
) -> Result<OneShotInstance> {
    let signal = trial_signal(cell, trial_seed)?;
    let codebook = trial_codebook(cell, trial_seed, fixed_codebook)?;
    OneShotInstance::generate(
        &codebook,
        &signal,
        cell.k,
        cell.sigma2,
        derive_seed(trial_seed, &[stream::BASELINE_SELECTION]),
        derive_seed(trial_seed, &[stream::NOISE]),
    )
}

pub fn run_lasso_trial(cell: &CellConfig, trial_seed: u64, fixed_codebook: Option<&Codebook>) -> Result<LassoOracle> {
    let instance = baseline_instance(cell, trial_seed, fixed_codebook)?;
    let grid = default_lambda_grid(instance.matrix(), &instance.observations, cell.lasso_grid_points);
    lasso_oracle_mse(&instance, &grid)
}

/// Linear MSE of the exact posterior mean on the trial's one-shot instance.
pub fn run_mmse_trial(cell: &CellConfig, trial_seed: u64, fixed_codebook: Option<&Codebook>) -> Result<f64> {
    let instance = baseline_instance(cell, trial_seed, fixed_codebook)?;
    let estimate = mmse_exact_small(instance.matrix(), &instance.observations, cell.rho, cell.sigma2)?;
    Ok(mse(&instance.signal, &estimate))
}

/// Mean of linear MSEs in dB, and the standard error of that mean mapped to
/// dB to first order.
pub fn aggregate_db(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    if values.len() < 2 || mean <= 0.0 {
        return (to_db(mean), 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
    let stderr = (var / count).sqrt();
    (to_db(mean), 10.0 / std::f64::consts::LN_10 * stderr / mean)
}

/// Runs every cell of `spec` on the current rayon pool.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepResult> {
    spec.validate()?;
    let methods = spec.methods()?;
    let cells = spec.cells()?;
    let mut rows = Vec::new();

    for (value_index, (param, value, cell)) in cells.iter().enumerate() {
        let fixed = if spec.fixed_codebook {
            Some(generate_codebook(
                cell.s,
                cell.n,
                cell.entry_variance,
                derive_seed(spec.master_seed, &[stream::FIXED_CODEBOOK, value_index as u64]),
            )?)
        } else {
            None
        };

        for (method_index, method) in methods.iter().enumerate() {
            let cell_index = (value_index * methods.len() + method_index) as u64;
            let started = Instant::now();
            let reference = |pick: fn(&ReferenceLevel) -> f64| {
                reference_level(cell.n, cell.k, cell.rho, cell.sigma2).map(|lvl| SweepRow {
                    swept_param: param.to_string(),
                    value: *value,
                    method: method.name(),
                    mse_db: pick(&lvl),
                    stderr_db: 0.0,
                    trials: 0,
                    seconds: 0.0,
                    failed: 0,
                    valid: true,
                })
            };
            match method {
                Method::LassoReference => rows.extend(reference(|l| l.lasso_db)),
                Method::MmseReference => rows.extend(reference(|l| l.mmse_db)),
                _ => {
                    let outcomes: Vec<Result<f64>> = (0..spec.trials as u64)
                        .into_par_iter()
                        .map(|t| {
                            let seed = derive_seed(spec.master_seed, &[cell_index, t]);
                            match method {
                                Method::Oas(kind) => {
                                    run_oas_trial(cell, *kind, seed, fixed.as_ref()).map(|o| o.result.final_mse())
                                }
                                Method::Lasso => run_lasso_trial(cell, seed, fixed.as_ref()).map(|o| o.mse),
                                Method::MmseExact => run_mmse_trial(cell, seed, fixed.as_ref()),
                                Method::LassoReference | Method::MmseReference => unreachable!(),
                            }
                        })
                        .collect();
                    let successes: Vec<f64> = outcomes.iter().filter_map(|o| o.as_ref().ok().copied()).collect();
                    let failed = outcomes.len() - successes.len();
                    let (mse_db, stderr_db) = aggregate_db(&successes);
                    rows.push(SweepRow {
                        swept_param: param.to_string(),
                        value: *value,
                        method: method.name(),
                        mse_db,
                        stderr_db,
                        trials: successes.len(),
                        seconds: started.elapsed().as_secs_f64(),
                        failed,
                        valid: failed as f64 <= MAX_FAILED_FRACTION * spec.trials as f64,
                    });
                }
            }
        }
    }
    Ok(SweepResult { rows })
}

/// [`run_sweep`] on a dedicated pool of `workers` threads.
pub fn run_sweep_with_workers(spec: &ExperimentSpec, workers: usize) -> Result<SweepResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| OasError::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_sweep(spec))
}
