//! Selector operators and the least-squares decoupling filter.

use nalgebra::{DMatrix, DVector, Dyn, QR};

use crate::error::{OasError, Result};

/// Matrices whose 1-norm condition estimate exceeds this are rejected.
pub const MAX_CONDITION: f64 = 1e10;

/// Row selector `Sel(X)`: an `|X| x N` 0/1 matrix whose row `l` is the
/// standard basis vector at the `l`-th index of `X`. Kept as an index list
/// and applied as a gather/scatter. Indices are zero-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectorMatrix {
    indices: Vec<usize>,
    dim: usize,
}

/// Builds `Sel(X)` for the ordered index set `indices` in `[0, n)`.
pub fn sel(indices: &[usize], n: usize) -> Result<SelectorMatrix> {
    let mut seen = vec![false; n];
    for &i in indices {
        if i >= n {
            return Err(OasError::invalid(format!("selector index {i} outside [0, {n})")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(OasError::invalid(format!("selector index {i} repeated")));
        }
    }
    Ok(SelectorMatrix {
        indices: indices.to_vec(),
        dim: n,
    })
}

impl SelectorMatrix {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `Sel([N] \ X)` with the remaining indices in ascending order.
    pub fn complement(&self) -> SelectorMatrix {
        let mut member = vec![false; self.dim];
        for &i in &self.indices {
            member[i] = true;
        }
        SelectorMatrix {
            indices: (0..self.dim).filter(|&i| !member[i]).collect(),
            dim: self.dim,
        }
    }

    /// `P x`
    pub fn gather(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.indices.iter().map(|&i| x[i]))
    }

    /// `P^T v`
    pub fn scatter(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for (l, &i) in self.indices.iter().enumerate() {
            out[i] = v[l];
        }
        out
    }

    /// `A P^T`, i.e. the selected columns of `A` in selector order.
    pub fn select_columns(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        a.select_columns(self.indices.iter())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.len(), self.dim);
        for (l, &i) in self.indices.iter().enumerate() {
            p[(l, i)] = 1.0;
        }
        p
    }
}

/// Left inverse `F = (Q^T Q)^{-1} Q^T` of a tall `K x L` matrix, held in
/// factored form `F = R^{-1} Q1^T` from a Householder QR of `Q`.
pub struct LeastSquaresFilter {
    qr: QR<f64, Dyn, Dyn>,
    r_inv: DMatrix<f64>,
    condition: f64,
}

impl LeastSquaresFilter {
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        let (k, l) = q.shape();
        if l == 0 || k < l {
            return Err(OasError::invalid(format!(
                "pseudo-inverse needs a tall matrix with K >= L >= 1 (got {k}x{l})"
            )));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(OasError::invalid("pseudo-inverse input has non-finite entries"));
        }
        let qr = q.qr();
        let r = qr.r();
        let r_inv = r
            .solve_upper_triangular(&DMatrix::identity(l, l))
            .ok_or(OasError::SingularMatrix {
                condition: f64::INFINITY,
            })?;
        let condition = norm_1(&r) * norm_1(&r_inv);
        if !condition.is_finite() || condition > MAX_CONDITION {
            return Err(OasError::SingularMatrix { condition });
        }
        Ok(LeastSquaresFilter { qr, r_inv, condition })
    }

    /// 1-norm condition number of `R`, which shares its singular values
    /// with `Q`.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// `F v` for a length-`K` vector.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let l = self.r_inv.nrows();
        let mut w = v.clone();
        self.qr.q_tr_mul(&mut w);
        &self.r_inv * w.rows(0, l)
    }

    /// Squared row norms `||f_l||^2` of `F`, equal to the diagonal of
    /// `(Q^T Q)^{-1} = R^{-1} R^{-T}`.
    pub fn row_norms_sq(&self) -> Vec<f64> {
        self.r_inv.row_iter().map(|row| row.norm_squared()).collect()
    }

    /// Materialized `L x K` matrix `F`.
    pub fn matrix(&self) -> DMatrix<f64> {
        &self.r_inv * self.qr.q().transpose()
    }
}

fn norm_1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `(Q^T Q)^{-1} Q^T` computed through QR; rejects rank-deficient or
/// ill-conditioned input with the condition estimate attached.
pub fn pseudo_inverse(q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    LeastSquaresFilter::new(q.clone()).map(|f| f.matrix())
}
