//! Anchor-graph spectral step on the unnormalized Laplacian `D − PPᵀ`,
//! restricted to the column space of `P`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen_ascending, thin_svd};
use crate::self_expression::ProjectorP;

/// Thin SVD `P = Q·diag(Λ)·Rᵀ`.
#[derive(Debug, Clone)]
pub struct FactorSvd {
    pub q: DMatrix<f64>,
    pub lambda: DVector<f64>,
    pub r: DMatrix<f64>,
}

pub fn factor_svd(p: &ProjectorP) -> Result<FactorSvd> {
    let svd = thin_svd(p.values())?;
    Ok(FactorSvd {
        q: svd.u,
        lambda: svd.singular_values,
        r: svd.v,
    })
}

/// Row sums of `PPᵀ` as `P·(Pᵀ·1)`.
pub fn degree_vector(p: &ProjectorP) -> DVector<f64> {
    let pv = p.values();
    let col_sums = pv.row_sum().transpose();
    pv * col_sums
}

/// Eigenpairs of the reduced matrix, ascending.
#[derive(Debug, Clone)]
pub struct ReducedEigen {
    /// `m×k` eigenvectors.
    pub y: DMatrix<f64>,
    pub mu: Vec<f64>,
    /// `μ_{k+1}` when `k < m`.
    pub next: Option<f64>,
}

/// `M = Qᵀ·diag(d)·Q − Λ²`, symmetrized.
pub fn reduced_matrix(svd: &FactorSvd, d: &DVector<f64>) -> Result<DMatrix<f64>> {
    let q = &svd.q;
    if d.len() != q.nrows() {
        return Err(Error::shape(format!(
            "degree vector has length {}, Q has {} rows",
            d.len(),
            q.nrows()
        )));
    }
    let mut dq = q.clone();
    for (i, mut row) in dq.row_iter_mut().enumerate() {
        row *= d[i];
    }
    let mut m = q.tr_mul(&dq);
    for i in 0..m.nrows() {
        m[(i, i)] -= svd.lambda[i] * svd.lambda[i];
    }
    Ok((&m + m.transpose()) * 0.5)
}

/// The `k` smallest eigenpairs of the reduced `m×m` matrix. Ties keep
/// ascending-eigenvalue-then-index order.
pub fn reduced_eigenproblem(svd: &FactorSvd, d: &DVector<f64>, k: usize) -> Result<ReducedEigen> {
    let m = svd.q.ncols();
    if k == 0 || k > m {
        return Err(Error::config(format!("k = {k} must lie in [1, m = {m}]")));
    }
    let reduced = reduced_matrix(svd, d)?;
    let (vals, vecs) = symmetric_eigen_ascending(&reduced)?;
    Ok(ReducedEigen {
        y: vecs.columns(0, k).into_owned(),
        mu: vals.iter().take(k).copied().collect(),
        next: (k < m).then(|| vals[k]),
    })
}

/// `H_k = Q·Y_k`.
pub fn lift_embedding(svd: &FactorSvd, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if y.nrows() != svd.q.ncols() {
        return Err(Error::shape(format!(
            "Y has {} rows, Q has {} columns",
            y.nrows(),
            svd.q.ncols()
        )));
    }
    Ok(&svd.q * y)
}

/// Largest `‖𝓛h − μh‖` over the lifted vectors, with `𝓛h = d∘h − P(Pᵀh)`
/// so the Laplacian is never formed. Nonzero values measure how far
/// `col(Q)` is from an invariant subspace of `𝓛`.
pub fn lifted_residual(p: &ProjectorP, d: &DVector<f64>, h: &DMatrix<f64>, mu: &[f64]) -> f64 {
    let pv = p.values();
    let ph = pv * pv.tr_mul(h);
    let mut worst = 0.0f64;
    for (j, &m) in mu.iter().enumerate() {
        let mut r = 0.0;
        for i in 0..h.nrows() {
            let v = d[i] * h[(i, j)] - ph[(i, j)] - m * h[(i, j)];
            r += v * v;
        }
        worst = worst.max(r.sqrt());
    }
    worst
}
