//! Normalized spectral embedding of the squared affinity `S = C∘C`,
//! `C = PPᵀ`, without forming `n×n` matrices.
//!
//! `Sᵢⱼ = (pᵢᵀpⱼ)² = ⟨kᵢ, kⱼ⟩` where `kᵢ` is the symmetric vectorization
//! of `pᵢpᵢᵀ` (off-diagonal entries scaled by √2), so `S = KKᵀ` with
//! `K` of size `n × m(m+1)/2`. The top eigenvectors of `D^{-1/2}SD^{-1/2}`
//! are found by block subspace iteration with Rayleigh–Ritz extraction.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{standard_normal_matrix, symmetric_eigen_ascending};
use crate::self_expression::ProjectorP;

const ROW_BLOCK: usize = 512;
/// Largest `K` (in entries) kept in memory between iterations.
const CACHE_ENTRIES: usize = 16_000_000;

/// Degrees of `S`: `dᵢ = pᵢᵀ(PᵀP)pᵢ`.
pub fn squared_degrees(p: &ProjectorP) -> DVector<f64> {
    let pv = p.values();
    let g = pv.tr_mul(pv);
    let pg = pv * g;
    DVector::from_fn(pv.nrows(), |i, _| pv.row(i).dot(&pg.row(i)))
}

struct Operator<'a> {
    p: &'a DMatrix<f64>,
    /// `D^{-1/2}`, zero for isolated rows.
    scale: DVector<f64>,
    cached: Option<DMatrix<f64>>,
}

fn sym_width(m: usize) -> usize {
    m * (m + 1) / 2
}

impl<'a> Operator<'a> {
    fn new(p: &'a DMatrix<f64>, scale: DVector<f64>) -> Self {
        let mut op = Self {
            p,
            scale,
            cached: None,
        };
        let (n, m) = p.shape();
        if n * sym_width(m) <= CACHE_ENTRIES {
            op.cached = Some(op.block(0, n));
        }
        op
    }

    /// Rows `start..start+len` of `D^{-1/2}K`.
    fn block(&self, start: usize, len: usize) -> DMatrix<f64> {
        let m = self.p.ncols();
        let mut k = DMatrix::zeros(len, sym_width(m));
        let root2 = std::f64::consts::SQRT_2;
        for r in 0..len {
            let i = start + r;
            let s = self.scale[i];
            let row = self.p.row(i);
            let mut c = 0;
            for a in 0..m {
                for b in a..m {
                    let v = row[a] * row[b];
                    k[(r, c)] = if a == b { v } else { root2 * v } * s;
                    c += 1;
                }
            }
        }
        k
    }

    fn apply(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        if let Some(k) = &self.cached {
            return k * k.tr_mul(v);
        }
        let n = self.p.nrows();
        let mut w = DMatrix::zeros(sym_width(self.p.ncols()), v.ncols());
        let mut start = 0;
        while start < n {
            let len = ROW_BLOCK.min(n - start);
            w += self.block(start, len).tr_mul(&v.rows(start, len));
            start += len;
        }
        let mut out = DMatrix::zeros(n, v.ncols());
        let mut start = 0;
        while start < n {
            let len = ROW_BLOCK.min(n - start);
            out.rows_mut(start, len).copy_from(&(self.block(start, len) * &w));
            start += len;
        }
        out
    }
}

/// Subspace iteration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationConfig {
    /// Stop when every wanted Ritz pair has `‖Ax − θx‖ ≤ tol`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for IterationConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 300,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SquaredEmbedding {
    /// `n×k`, orthonormal columns, before row normalization.
    pub h: DMatrix<f64>,
    /// Top `k` eigenvalues of `D^{-1/2}SD^{-1/2}`, descending.
    pub eigenvalues: Vec<f64>,
    /// Ritz value `k+1` when the block is wide enough.
    pub next: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    pub isolated_rows: usize,
}

/// Top-`k` eigenvectors of the normalized squared affinity.
pub fn squared_embedding(p: &ProjectorP, k: usize, seed: u64, cfg: IterationConfig) -> Result<SquaredEmbedding> {
    let n = p.n();
    if k == 0 || k > n {
        return Err(Error::config(format!("k = {k} must lie in [1, n = {n}]")));
    }
    let degrees = squared_degrees(p);
    let isolated = degrees.iter().filter(|&&d| d <= 0.0).count();
    if isolated > 0 {
        warn!("{isolated} rows of P have zero squared-affinity degree");
    }
    let scale = degrees.map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 });
    let op = Operator::new(p.values(), scale);

    let block = n.min((2 * k).max(k + 8));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v0 = standard_normal_matrix(n, block, &mut rng);
    let root = degrees.map(|d| d.max(0.0).sqrt());
    if root.norm() > 0.0 {
        v0.set_column(0, &(&root / root.norm()));
    }
    let mut v = v0.qr().q();

    let mut iterations = 0;
    loop {
        iterations += 1;
        let w = op.apply(&v);
        let t = v.tr_mul(&w);
        let (vals, vecs) = symmetric_eigen_ascending(&t)?;
        let b = vals.len();
        // descending Ritz order
        let mut y = DMatrix::zeros(b, b);
        let mut theta = vec![0.0; b];
        for j in 0..b {
            y.set_column(j, &vecs.column(b - 1 - j));
            theta[j] = vals[b - 1 - j];
        }
        let x = &v * &y;
        let ax = &w * &y;
        let mut residual = 0.0f64;
        for j in 0..k {
            let r = (ax.column(j) - x.column(j) * theta[j]).norm();
            residual = residual.max(r);
        }
        let converged = residual <= cfg.tol;
        if converged || iterations >= cfg.max_iters {
            if !converged {
                warn!("subspace iteration stopped at residual {residual:.3e} after {iterations} iterations");
            }
            return Ok(SquaredEmbedding {
                h: x.columns(0, k).into_owned(),
                eigenvalues: theta[..k].to_vec(),
                next: (b > k).then(|| theta[k]),
                iterations,
                converged,
                residual,
                isolated_rows: isolated,
            });
        }
        v = ax.qr().q();
    }
}

/// Dense `D^{-1/2}(C∘C)D^{-1/2}` for reference computations.
pub fn dense_squared_affinity(p: &ProjectorP) -> DMatrix<f64> {
    let pv = p.values();
    let c = pv * pv.transpose();
    let s = c.component_mul(&c);
    let d: Vec<f64> = s.row_iter().map(|r| r.sum()).collect();
    let scale: Vec<f64> = d.iter().map(|&x| if x > 0.0 { 1.0 / x.sqrt() } else { 0.0 }).collect();
    DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| s[(i, j)] * scale[i] * scale[j])
}
