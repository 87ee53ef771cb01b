//! Landmark factorization `Z ≈ L·Pᵀ` with column-orthonormal `P`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, orthonormal_complete, orthonormality_defect, thin_svd};
use crate::spectral::kmeanspp_seed;

/// Tolerance on `‖PᵀP − I‖_max` accepted by [`ProjectorP::new`].
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Singular values below this fraction of the largest are treated as zero
/// by the Procrustes update.
pub const PROCRUSTES_RCOND: f64 = 1e-12;

/// `n×m` matrix with orthonormal columns; the affinity is `C = PPᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorP {
    values: DMatrix<f64>,
}

impl ProjectorP {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() == 0 || values.ncols() > values.nrows() {
            return Err(Error::shape(format!(
                "projector must have 1 <= m <= n, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("projector has non-finite entries".into()));
        }
        let defect = orthonormality_defect(&values);
        if defect > ORTHONORMAL_TOL {
            return Err(Error::Numerical(format!(
                "projector columns are not orthonormal (defect {defect:.3e})"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }
}

/// `d×m` anchor embeddings, one anchor per column.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkMatrix {
    values: DMatrix<f64>,
}

impl LandmarkMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("landmarks have non-finite entries".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }
}

/// Column indices of `Z` picked by k-means++ seeding.
pub fn kmeanspp_indices(z: &DMatrix<f64>, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m == 0 || m > z.ncols() {
        return Err(Error::config(format!(
            "anchor count m = {m} must lie in [1, n = {}]",
            z.ncols()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(kmeanspp_seed(z, m, &mut rng))
}

/// Landmarks initialised as a k-means++ subset of the columns of `Z`.
pub fn kmeanspp_anchors(z: &DMatrix<f64>, m: usize, seed: u64) -> Result<LandmarkMatrix> {
    let idx = kmeanspp_indices(z, m, seed)?;
    LandmarkMatrix::new(z.select_columns(&idx))
}

/// Minimiser of `‖Z − L·Pᵀ‖²_F` over column-orthonormal `P`: `P = U′V′ᵀ`
/// from the thin SVD `ZᵀL = U′Σ′V′ᵀ`. Left singular vectors of negligible
/// singular values are replaced by a deterministic orthonormal completion.
pub fn procrustes_update(z: &DMatrix<f64>, l: &LandmarkMatrix) -> Result<ProjectorP> {
    let lv = l.values();
    if z.nrows() != lv.nrows() {
        return Err(Error::shape(format!(
            "Z has {} rows, L has {}",
            z.nrows(),
            lv.nrows()
        )));
    }
    let (n, m) = (z.ncols(), lv.ncols());
    if m == 0 || m > n {
        return Err(Error::shape(format!("need 1 <= m <= n, got m = {m}, n = {n}")));
    }
    let cross = z.tr_mul(lv);
    if cross.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateAlignment(
            "ZᵀL is identically zero, so P is undetermined".into(),
        ));
    }
    let svd = thin_svd(&cross)?;
    let top = svd.singular_values[0];
    let keep = svd
        .singular_values
        .iter()
        .take_while(|&&s| s >= PROCRUSTES_RCOND * top)
        .count();
    let u = if keep < m {
        orthonormal_complete(&svd.u.columns(0, keep).into_owned(), m)?
    } else {
        svd.u
    };
    ProjectorP::new(u * svd.v.transpose())
}

/// Closed-form landmarks `L = Z·P`.
pub fn landmark_update(z: &DMatrix<f64>, p: &ProjectorP) -> Result<LandmarkMatrix> {
    if z.ncols() != p.n() {
        return Err(Error::shape(format!(
            "Z has {} columns, P has {} rows",
            z.ncols(),
            p.n()
        )));
    }
    LandmarkMatrix::new(z * p.values())
}

/// `‖Z − L·Pᵀ‖²_F`.
pub fn factorization_residual(z: &DMatrix<f64>, l: &LandmarkMatrix, p: &ProjectorP) -> Result<f64> {
    if z.nrows() != l.values().nrows() || z.ncols() != p.n() || l.m() != p.m() {
        return Err(Error::shape("Z, L and P are inconsistent"));
    }
    Ok(frobenius_sq(&(z - l.values() * p.values().transpose())))
}
