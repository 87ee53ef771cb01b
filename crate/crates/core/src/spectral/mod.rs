//! Spectral clustering through the factor `P`, plus a dense reference path.
//!
//! Two graph constructions are available:
//!
//! * [`LaplacianMode::SquaredNormalized`] (default) clusters with the
//!   normalized affinity `D^{-1/2}(C∘C)D^{-1/2}`. Squaring makes every
//!   entry nonnegative while keeping the matrix PSD; rows of the embedding
//!   are normalized before k-means.
//! * [`LaplacianMode::Unnormalized`] uses `𝓛 = D − C` restricted to
//!   `col(P)`: the reduced `m×m` problem `(QᵀDQ − Λ²)y = μy` and the lift
//!   `H = QY`. `C` can have negative entries, so degrees may be negative
//!   and the reduced problem is only a Rayleigh–Ritz approximation; both
//!   are reported in [`SpectralDiagnostics`].
//!
//! Both modes cost `O(n)` for fixed `m` and `k`.

mod kmeans;
mod literal;
mod squared;

pub use kmeans::{kmeans, kmeans_restarts, kmeanspp_seed, ClusterAssignment};
pub use literal::{
    degree_vector, factor_svd, lift_embedding, lifted_residual, reduced_eigenproblem, reduced_matrix, FactorSvd,
    ReducedEigen,
};
pub use squared::{dense_squared_affinity, squared_degrees, squared_embedding, IterationConfig, SquaredEmbedding};

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen_ascending;
use crate::self_expression::{ProjectorP, DENSE_CAP};

/// Eigenvalues closer than this are treated as tied.
pub const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianMode {
    #[default]
    SquaredNormalized,
    Unnormalized,
}

impl std::fmt::Display for LaplacianMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LaplacianMode::SquaredNormalized => "squared_normalized",
            LaplacianMode::Unnormalized => "unnormalized",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    pub mode: LaplacianMode,
    pub kmeans_max_iters: usize,
    pub kmeans_restarts: usize,
    /// Residual tolerance of the subspace iteration (squared mode).
    pub eig_tol: f64,
    pub eig_max_iters: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            mode: LaplacianMode::default(),
            kmeans_max_iters: 100,
            kmeans_restarts: 10,
            eig_tol: 1e-6,
            eig_max_iters: 300,
        }
    }
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kmeans_max_iters == 0 || self.kmeans_restarts == 0 || self.eig_max_iters == 0 {
            return Err(Error::config(
                "kmeans_max_iters, kmeans_restarts and eig_max_iters must be >= 1",
            ));
        }
        if !(self.eig_tol > 0.0) {
            return Err(Error::config("eig_tol must be positive"));
        }
        Ok(())
    }

    fn iteration(&self) -> IterationConfig {
        IterationConfig {
            tol: self.eig_tol,
            max_iters: self.eig_max_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDiagnostics {
    pub mode: LaplacianMode,
    /// Rows of `PPᵀ` with negative sum (unnormalized mode).
    pub negative_degrees: usize,
    /// Largest `‖𝓛h − μh‖` of the lifted vectors (unnormalized mode).
    pub lifted_residual: Option<f64>,
    /// Subspace iterations used (squared mode).
    pub iterations: usize,
    pub converged: bool,
    /// Gap between eigenvalue `k` and `k+1` of the solved problem.
    pub eigen_gap: Option<f64>,
}

/// Rows of `h` feed k-means; `eigenvalues` are ascending Laplacian
/// eigenvalues in unnormalized mode and descending affinity eigenvalues in
/// squared mode.
#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    pub h: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub row_normalized: bool,
}

impl SpectralEmbedding {
    /// The matrix handed to k-means: `h`, with unit rows when
    /// `row_normalized` (zero rows stay zero).
    pub fn clustering_input(&self) -> DMatrix<f64> {
        if !self.row_normalized {
            return self.h.clone();
        }
        row_normalize(&self.h)
    }
}

fn row_normalize(h: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = h.clone();
    for mut row in out.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    out
}

/// Spectral embedding of `C = PPᵀ` with `k` columns, never forming `C`.
pub fn spectral_embedding(
    p: &ProjectorP,
    k: usize,
    seed: u64,
    cfg: &SpectralConfig,
) -> Result<(SpectralEmbedding, SpectralDiagnostics)> {
    if k == 0 || k > p.m() {
        return Err(Error::config(format!(
            "cluster count k = {k} must lie in [1, m = {}]",
            p.m()
        )));
    }
    match cfg.mode {
        LaplacianMode::Unnormalized => {
            let svd = factor_svd(p)?;
            let d = degree_vector(p);
            let negative = d.iter().filter(|&&v| v < 0.0).count();
            if negative > 0 {
                warn!("{negative} rows of PPᵀ have negative degree");
            }
            let red = reduced_eigenproblem(&svd, &d, k)?;
            let h = lift_embedding(&svd, &red.y)?;
            let residual = lifted_residual(p, &d, &h, &red.mu);
            let gap = red.next.map(|nx| nx - red.mu[k - 1]);
            Ok((
                SpectralEmbedding {
                    h,
                    eigenvalues: red.mu,
                    row_normalized: false,
                },
                SpectralDiagnostics {
                    mode: cfg.mode,
                    negative_degrees: negative,
                    lifted_residual: Some(residual),
                    iterations: 0,
                    converged: true,
                    eigen_gap: gap,
                },
            ))
        }
        LaplacianMode::SquaredNormalized => {
            let emb = squared_embedding(p, k, seed, cfg.iteration())?;
            let gap = emb.next.map(|nx| emb.eigenvalues[k - 1] - nx);
            Ok((
                SpectralEmbedding {
                    h: emb.h,
                    eigenvalues: emb.eigenvalues,
                    row_normalized: true,
                },
                SpectralDiagnostics {
                    mode: cfg.mode,
                    negative_degrees: 0,
                    lifted_residual: None,
                    iterations: emb.iterations,
                    converged: emb.converged,
                    eigen_gap: gap,
                },
            ))
        }
    }
}

/// k-means on the embedding rows.
pub fn cluster_embedding(emb: &SpectralEmbedding, k: usize, seed: u64, cfg: &SpectralConfig) -> Result<ClusterAssignment> {
    kmeans_restarts(&emb.clustering_input(), k, seed, cfg.kmeans_max_iters, cfg.kmeans_restarts)
}

/// Result of the dense reference path.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub assignment: ClusterAssignment,
    pub embedding: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// True when eigenvalues `k` and `k+1` tie within [`TIE_TOL`], so the
    /// embedding is an arbitrary basis choice.
    pub degenerate: bool,
}

/// Forms the `n×n` graph explicitly, takes a full eigendecomposition and
/// clusters the rows of the selected eigenvectors. For tests and
/// benchmarks only.
pub fn full_spectral_oracle(
    p: &ProjectorP,
    k: usize,
    seed: u64,
    cfg: &SpectralConfig,
    cap: usize,
) -> Result<OracleResult> {
    let n = p.n();
    if n > cap {
        return Err(Error::OracleScale { n, cap });
    }
    if k == 0 || k > n {
        return Err(Error::config(format!("k = {k} must lie in [1, n = {n}]")));
    }
    let (embedding, eigenvalues, next, input) = match cfg.mode {
        LaplacianMode::Unnormalized => {
            let pv = p.values();
            let c = pv * pv.transpose();
            let mut lap = -c.clone();
            for i in 0..n {
                lap[(i, i)] += c.row(i).sum();
            }
            let (vals, vecs) = symmetric_eigen_ascending(&lap)?;
            let h = vecs.columns(0, k).into_owned();
            let next = (k < n).then(|| vals[k]);
            (h.clone(), vals.iter().take(k).copied().collect::<Vec<_>>(), next, h)
        }
        LaplacianMode::SquaredNormalized => {
            let a = dense_squared_affinity(p);
            let (vals, vecs) = symmetric_eigen_ascending(&a)?;
            let mut h = DMatrix::zeros(n, k);
            let mut top = Vec::with_capacity(k);
            for j in 0..k {
                h.set_column(j, &vecs.column(n - 1 - j));
                top.push(vals[n - 1 - j]);
            }
            let next = (k < n).then(|| vals[n - 1 - k]);
            let input = row_normalize(&h);
            (h, top, next, input)
        }
    };
    let degenerate = next.is_some_and(|nx| (nx - eigenvalues[k - 1]).abs() <= TIE_TOL);
    if degenerate {
        warn!("dense spectral oracle: eigenvalues {k} and {} tie", k + 1);
    }
    let assignment = kmeans_restarts(&input, k, seed, cfg.kmeans_max_iters, cfg.kmeans_restarts)?;
    Ok(OracleResult {
        assignment,
        embedding,
        eigenvalues,
        degenerate,
    })
}

/// [`full_spectral_oracle`] with the default cap.
pub fn full_spectral_oracle_default(p: &ProjectorP, k: usize, seed: u64, cfg: &SpectralConfig) -> Result<OracleResult> {
    full_spectral_oracle(p, k, seed, cfg, DENSE_CAP)
}
