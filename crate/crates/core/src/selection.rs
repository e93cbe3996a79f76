//! Codeword selection `A(C, K, F, x_hat)`: which `K` codebook vectors sense
//! the targeted samples `F` in the next subframe.
//!
//! All strategies score codewords through the interference they pick up from
//! the untargeted samples, whose current estimates are `x_tilde = E x_hat`.
//! For codeword `c_i` the scalar `s_i = c_i^T E^T x_tilde` is that
//! interference, and `P c_i` is the codeword restricted to the targets.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::error::{OasError, Result};
use crate::linalg::SelectorMatrix;
use crate::rng::seeded_rng;

pub const DEFAULT_EXHAUSTIVE_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Random,
    Stepwise,
    Exhaustive { max_subsets: u64 },
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Stepwise => "stepwise",
            StrategyKind::Exhaustive { .. } => "exhaustive",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "random" => Ok(StrategyKind::Random),
            "stepwise" => Ok(StrategyKind::Stepwise),
            "exhaustive" => Ok(StrategyKind::Exhaustive {
                max_subsets: DEFAULT_EXHAUSTIVE_BUDGET,
            }),
            other => Err(OasError::Config(format!(
                "unknown selection strategy `{other}` (expected random, stepwise or exhaustive)"
            ))),
        }
    }
}

/// A strategy plus the seed feeding its random choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionStrategy {
    pub kind: StrategyKind,
    pub seed: u64,
}

impl SelectionStrategy {
    pub fn new(kind: StrategyKind, seed: u64) -> Self {
        SelectionStrategy { kind, seed }
    }

    /// Selects `k` codewords for targets `targets`. `seed` is the per-call
    /// seed for the random parts (the engine derives one per subframe).
    pub fn select(
        &self,
        codebook: &Codebook,
        k: usize,
        targets: &SelectorMatrix,
        x_hat: &DVector<f64>,
        seed: u64,
    ) -> Result<Vec<usize>> {
        match self.kind {
            StrategyKind::Random => select_random(codebook, k, seed),
            StrategyKind::Stepwise => select_stepwise(codebook, k, targets, x_hat, seed),
            StrategyKind::Exhaustive { max_subsets } => select_exhaustive(codebook, k, targets, x_hat, max_subsets),
        }
    }
}

fn check_count(codebook: &Codebook, k: usize) -> Result<()> {
    if k == 0 || k > codebook.size() {
        return Err(OasError::invalid(format!(
            "cannot select {k} distinct codewords from a codebook of size {}",
            codebook.size()
        )));
    }
    Ok(())
}

/// Uniformly random `k`-subset of the codebook.
pub fn select_random(codebook: &Codebook, k: usize, seed: u64) -> Result<Vec<usize>> {
    check_count(codebook, k)?;
    let mut rng = seeded_rng(seed);
    Ok(index::sample(&mut rng, codebook.size(), k).into_vec())
}

/// `s_i = c_i^T E^T E x_hat` for every codeword.
pub fn interference_terms(codebook: &Codebook, targets: &SelectorMatrix, x_hat: &DVector<f64>) -> DVector<f64> {
    let mut residual = x_hat.clone();
    for &i in targets.indices() {
        residual[i] = 0.0;
    }
    codebook.matrix() * residual
}

/// Observation-space interference power `||U E^T x_tilde||^2` of a subset.
pub fn observation_interference(terms: &DVector<f64>, subset: &[usize]) -> f64 {
    subset.iter().map(|&i| terms[i] * terms[i]).sum()
}

/// Target-projected interference `||sum_i s_i P c_i||^2`, the quantity the
/// stepwise rule drives down.
pub fn projected_interference(
    codebook: &Codebook,
    targets: &SelectorMatrix,
    terms: &DVector<f64>,
    subset: &[usize],
) -> f64 {
    let c = codebook.matrix();
    targets
        .indices()
        .iter()
        .map(|&n| subset.iter().map(|&i| terms[i] * c[(i, n)]).sum::<f64>().powi(2))
        .sum()
}

/// Number of `k`-subsets of `s` items, saturating at `u128::MAX`.
pub fn binomial(s: usize, k: usize) -> u128 {
    if k > s {
        return 0;
    }
    let k = k.min(s - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = match acc.checked_mul((s - j) as u128) {
            Some(v) => v / (j as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Exact minimizer of the observation-space interference over all
/// `k`-subsets, found by enumeration. The result is in ascending order;
/// among equal objectives the lexicographically smallest set wins.
pub fn select_exhaustive(
    codebook: &Codebook,
    k: usize,
    targets: &SelectorMatrix,
    x_hat: &DVector<f64>,
    max_subsets: u64,
) -> Result<Vec<usize>> {
    check_count(codebook, k)?;
    let s = codebook.size();
    let subsets = binomial(s, k);
    if subsets > max_subsets as u128 {
        return Err(OasError::BudgetExceeded {
            subsets,
            budget: max_subsets,
        });
    }
    let power: Vec<f64> = interference_terms(codebook, targets, x_hat)
        .iter()
        .map(|v| v * v)
        .collect();

    let mut current: Vec<usize> = (0..k).collect();
    let mut best = current.clone();
    let mut best_value = f64::INFINITY;
    loop {
        let value: f64 = current.iter().map(|&i| power[i]).sum();
        if value < best_value {
            best_value = value;
            best.copy_from_slice(&current);
        }
        // advance to the next combination in lexicographic order
        let Some(pos) = (0..k).rev().find(|&p| current[p] < s - k + p) else {
            break;
        };
        current[pos] += 1;
        for p in pos + 1..k {
            current[p] = current[p - 1] + 1;
        }
    }
    Ok(best)
}

/// Greedy stepwise-regression selection.
///
/// The first codeword is drawn at random. At step `k` the already chosen
/// codewords `a_1..a_{k-1}` (as columns of `A_k`) leave the residual
/// interference `v_k = P A_k A_k^T E^T x_tilde = sum_j s_j P a_j` on the
/// targets, and the next codeword is the unused `c_i` minimizing
/// `f_k(c_i) = ||s_i P c_i + v_k||^2`, lowest index on ties.
pub fn select_stepwise(
    codebook: &Codebook,
    k: usize,
    targets: &SelectorMatrix,
    x_hat: &DVector<f64>,
    seed: u64,
) -> Result<Vec<usize>> {
    check_count(codebook, k)?;
    let s = codebook.size();
    let first = select_random(codebook, 1, seed)?[0];
    let terms = interference_terms(codebook, targets, x_hat);
    // P c_i for every codeword, one column per codeword
    let projected: DMatrix<f64> = targets.select_columns(codebook.matrix()).transpose();

    let mut chosen = vec![first];
    let mut used = vec![false; s];
    used[first] = true;
    let mut residual: DVector<f64> = projected.column(first) * terms[first];

    while chosen.len() < k {
        let mut best = usize::MAX;
        let mut best_value = f64::INFINITY;
        for i in (0..s).filter(|&i| !used[i]) {
            let si = terms[i];
            let value: f64 = projected
                .column(i)
                .iter()
                .zip(residual.iter())
                .map(|(p, v)| (si * p + v).powi(2))
                .sum();
            if value < best_value {
                best_value = value;
                best = i;
            }
        }
        used[best] = true;
        chosen.push(best);
        residual.axpy(terms[best], &projected.column(best), 1.0);
    }
    Ok(chosen)
}
