//! Dense least-squares self-expression and its projector approximation.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, standard_normal_matrix, symmetric_eigen_ascending};

/// Default size cap for dense `n×n` computations.
pub const DENSE_CAP: usize = 2000;

/// Relative threshold on Gram eigenvalues that defines the numerical rank.
pub const RANK_TOL: f64 = 1e-8;

/// Eigendecomposition of the Gram matrix `XᵀX`, reusable across `λ`.
#[derive(Debug, Clone)]
pub struct GramSpectrum {
    /// Eigenvalues descending, length `n`. Values at or below `RANK_TOL·β₁`
    /// are set to exactly zero.
    pub betas: DVector<f64>,
    /// Eigenvectors of the positive eigenvalues as columns (`n×rank`).
    pub vectors: DMatrix<f64>,
    pub rank: usize,
}

impl GramSpectrum {
    /// Works on whichever of `XᵀX` (`n×n`) and `XXᵀ` (`D×D`) is smaller; in
    /// the second case `V = XᵀU·B^{-1/2}`.
    pub fn compute(x: &DataMatrix, cap: usize) -> Result<Self> {
        let n = x.n();
        if n > cap {
            return Err(Error::OracleScale { n, cap });
        }
        let xv = x.values();
        let wide = xv.nrows() < n;
        let gram = if wide { xv * xv.transpose() } else { xv.tr_mul(xv) };
        let (vals, vecs) = symmetric_eigen_ascending(&gram)?;
        let q = vals.len();
        let top = vals[q - 1].max(0.0);
        let mut betas = DVector::zeros(n);
        let mut kept = Vec::new();
        for k in 0..q {
            let b = vals[q - 1 - k];
            if top > 0.0 && b > RANK_TOL * top {
                betas[k] = b;
                kept.push(q - 1 - k);
            }
        }
        let rank = kept.len();
        let mut vectors = DMatrix::zeros(n, rank);
        for (j, &i) in kept.iter().enumerate() {
            if wide {
                let mut col = xv.tr_mul(&vecs.column(i)) / vals[i].sqrt();
                // one re-normalization absorbs rounding in the lift
                let norm = col.norm();
                col /= norm;
                vectors.set_column(j, &col);
            } else {
                vectors.set_column(j, &vecs.column(i));
            }
        }
        Ok(Self {
            betas,
            vectors,
            rank,
        })
    }

    pub fn solve(&self, lambda: f64) -> Result<LsrSolution> {
        check_lambda(lambda)?;
        let taus = self.betas.map(|b| b / (b + lambda));
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= taus[j];
        }
        let c = &scaled * self.vectors.transpose();
        let c_star = (&c + c.transpose()) * 0.5;
        Ok(LsrSolution {
            c_star,
            lambda,
            betas: self.betas.clone(),
            taus,
            vectors: self.vectors.clone(),
            rank: self.rank,
        })
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

/// `C* = (XᵀX + λI)⁻¹XᵀX` together with its spectrum.
#[derive(Debug, Clone)]
pub struct LsrSolution {
    pub c_star: DMatrix<f64>,
    pub lambda: f64,
    /// Gram eigenvalues, descending.
    pub betas: DVector<f64>,
    /// Eigenvalues of `C*` in the same order: `τᵢ = βᵢ/(βᵢ+λ)`.
    pub taus: DVector<f64>,
    /// Shared eigenvectors of `XᵀX` and `C*` for the positive eigenvalues.
    pub vectors: DMatrix<f64>,
    pub rank: usize,
}

/// Dense closed form with the default cap.
pub fn lsr_closed_form(x: &DataMatrix, lambda: f64) -> Result<LsrSolution> {
    lsr_closed_form_capped(x, lambda, DENSE_CAP)
}

pub fn lsr_closed_form_capped(x: &DataMatrix, lambda: f64, cap: usize) -> Result<LsrSolution> {
    check_lambda(lambda)?;
    GramSpectrum::compute(x, cap)?.solve(lambda)
}

/// `½‖X − XC‖²_F + (λ/2)‖C‖²_F`, the objective whose exact minimiser is
/// `(XᵀX + λI)⁻¹XᵀX`. With weight `λ` instead of `λ/2` on the penalty the
/// minimiser would be `(XᵀX + 2λI)⁻¹XᵀX`.
pub fn lsr_objective(x: &DMatrix<f64>, c: &DMatrix<f64>, lambda: f64) -> f64 {
    0.5 * frobenius_sq(&(x - x * c)) + 0.5 * lambda * frobenius_sq(c)
}

/// `‖C* − PPᵀ‖²_F` by explicit subtraction, where `P` holds the
/// eigenvectors of `C*` with positive eigenvalues.
pub fn projector_residual(lsr: &LsrSolution) -> f64 {
    let p = &lsr.vectors;
    let diff = &lsr.c_star - p * p.transpose();
    frobenius_sq(&diff)
}

/// `Σᵢ (λ/(βᵢ+λ))²` over the positive Gram eigenvalues.
pub fn projector_residual_formula(betas: &[f64], lambda: f64) -> f64 {
    betas
        .iter()
        .filter(|&&b| b > 0.0)
        .map(|b| (lambda / (b + lambda)).powi(2))
        .sum()
}

/// How the replication experiment evaluates `‖C* − PPᵀ‖²_F`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualRoute {
    /// Form `C*` and `PPᵀ` as `n×n` matrices.
    Dense,
    /// Work in the `r`-dimensional row space of `X`. With `XXᵀ = UBUᵀ` the
    /// eigenvectors of `C*` are `V = XᵀUB^{-1/2}`, so
    /// `C* − PPᵀ = V diag(τ − 1) Vᵀ` and its squared norm is
    /// `Σᵢⱼ Gᵢⱼ² (τᵢ−1)(τⱼ−1)` with `G = VᵀV`.
    Factored,
}

/// Residual of the factored route for a given `X` (`r×n`) and `λ`.
pub fn projector_residual_factored(x: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let outer = x * x.transpose();
    let (vals, vecs) = symmetric_eigen_ascending(&outer)?;
    let top = vals.max().max(0.0);
    let keep: Vec<usize> = (0..vals.len())
        .filter(|&i| top > 0.0 && vals[i] > RANK_TOL * top)
        .collect();
    if keep.is_empty() {
        return Ok(0.0);
    }
    let mut v = DMatrix::zeros(x.ncols(), keep.len());
    let mut gaps = Vec::with_capacity(keep.len());
    for (j, &i) in keep.iter().enumerate() {
        let col = x.tr_mul(&vecs.column(i)) / vals[i].sqrt();
        v.set_column(j, &col);
        gaps.push(vals[i] / (vals[i] + lambda) - 1.0);
    }
    let g = v.tr_mul(&v);
    let mut total = 0.0;
    for i in 0..gaps.len() {
        for j in 0..gaps.len() {
            total += g[(i, j)].powi(2) * gaps[i] * gaps[j];
        }
    }
    Ok(total)
}

/// Replication of the projector-approximation experiment.
#[derive(Debug, Clone)]
pub struct Prop3Experiment {
    pub ranks: Vec<usize>,
    pub n: usize,
    pub delta: f64,
    pub trials: usize,
    pub seed: u64,
    pub route: ResidualRoute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop3Outcome {
    /// Fraction of all trials with residual `≤ δ`.
    pub probability: f64,
    pub total: usize,
    pub successes: usize,
    pub max_residual: f64,
}

/// For each rank and trial draw `X ~ N(0,1)^{r×n}` and `λ ~ U(0, 1]`, then
/// count residuals `≤ δ`. Trial `t` of rank index `i` uses stream
/// `i·trials + t` of a seeded ChaCha generator, so results do not depend on
/// evaluation order.
pub fn verify_prop3_experiment(exp: &Prop3Experiment) -> Result<Prop3Outcome> {
    if exp.trials == 0 {
        return Err(Error::config("trials must be >= 1"));
    }
    if let Some(&r) = exp.ranks.iter().max() {
        if r > exp.n {
            return Err(Error::config(format!("rank {r} exceeds n = {}", exp.n)));
        }
    }
    let mut successes = 0;
    let mut total = 0;
    let mut max_residual = 0.0f64;
    for (ri, &r) in exp.ranks.iter().enumerate() {
        for t in 0..exp.trials {
            let mut rng = ChaCha8Rng::seed_from_u64(exp.seed);
            rng.set_stream((ri * exp.trials + t) as u64);
            let x = standard_normal_matrix(r, exp.n, &mut rng);
            let lambda = 1.0 - rng.random::<f64>();
            let residual = match exp.route {
                ResidualRoute::Dense => {
                    let sol = lsr_closed_form_capped(&DataMatrix::new(x)?, lambda, usize::MAX)?;
                    projector_residual(&sol)
                }
                ResidualRoute::Factored => projector_residual_factored(&x, lambda)?,
            };
            max_residual = max_residual.max(residual);
            if residual <= exp.delta {
                successes += 1;
            }
            total += 1;
        }
    }
    Ok(Prop3Outcome {
        probability: successes as f64 / total.max(1) as f64,
        total,
        successes,
        max_residual,
    })
}

/// `‖X − XPPᵀ‖²_F`.
pub fn lowrank_residual(x: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let xp = x * p;
    frobenius_sq(&(x - &xp * p.transpose()))
}

/// `tr(PᵀXᵀXP) = ‖XP‖²_F`.
pub fn trace_objective(x: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    frobenius_sq(&(x * p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(m: DMatrix<f64>) -> DataMatrix {
        DataMatrix::new(m).unwrap()
    }

    #[test]
    fn identity_input() {
        let sol = lsr_closed_form(&dm(DMatrix::identity(2, 2)), 1.0).unwrap();
        assert!((sol.c_star.clone() - DMatrix::identity(2, 2) * 0.5).amax() < 1e-14);
        assert!((projector_residual(&sol) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn rank_one_diagonal() {
        let x = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let sol = lsr_closed_form(&dm(x), 1.0).unwrap();
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.0]));
        assert!((sol.c_star - want).amax() < 1e-14);
        assert_eq!(sol.rank, 1);
    }

    #[test]
    fn scalar_residual() {
        // one sample with ‖x‖² = 1 gives β = 1
        let sol = lsr_closed_form(&dm(DMatrix::from_element(1, 1, 1.0)), 0.5).unwrap();
        assert!((projector_residual(&sol) - 1.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_lambda_and_scale() {
        let x = dm(DMatrix::identity(2, 2));
        assert!(matches!(lsr_closed_form(&x, 0.0), Err(Error::Domain(_))));
        assert!(matches!(lsr_closed_form(&x, -1.0), Err(Error::Domain(_))));
        assert!(matches!(
            lsr_closed_form_capped(&x, 1.0, 1),
            Err(Error::OracleScale { n: 2, cap: 1 })
        ));
    }

    #[test]
    fn global_minimizer_against_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = standard_normal_matrix(4, 9, &mut rng);
        let lambda = 0.3;
        let sol = lsr_closed_form(&dm(x.clone()), lambda).unwrap();
        let best = lsr_objective(&x, &sol.c_star, lambda);
        for _ in 0..50 {
            let e = standard_normal_matrix(9, 9, &mut rng);
            for eps in [1e-3, -1e-3] {
                assert!(best <= lsr_objective(&x, &(&sol.c_star + &e * eps), lambda));
            }
        }
    }

    #[test]
    fn full_penalty_weight_doubles_lambda() {
        // ½‖X − XC‖² + λ‖C‖² = lsr_objective(.., 2λ) is minimised by C*(2λ)
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = standard_normal_matrix(3, 7, &mut rng);
        let lambda = 0.4;
        let sol = lsr_closed_form(&dm(x.clone()), 2.0 * lambda).unwrap();
        let f = |c: &DMatrix<f64>| 0.5 * frobenius_sq(&(&x - &x * c)) + lambda * frobenius_sq(c);
        let best = f(&sol.c_star);
        for _ in 0..50 {
            let e = standard_normal_matrix(7, 7, &mut rng) * 1e-3;
            assert!(best <= f(&(&sol.c_star + e)));
        }
    }

    #[test]
    fn factored_and_dense_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for r in [1, 3, 7] {
            let x = standard_normal_matrix(r, 30, &mut rng);
            let lambda = 0.7;
            let dense = projector_residual(&lsr_closed_form(&dm(x.clone()), lambda).unwrap());
            let factored = projector_residual_factored(&x, lambda).unwrap();
            assert!((dense - factored).abs() < 1e-12, "{dense} vs {factored}");
        }
    }

    #[test]
    fn infinite_delta_always_succeeds() {
        let exp = Prop3Experiment {
            ranks: vec![1, 2, 3],
            n: 10,
            delta: 1e9,
            trials: 3,
            seed: 0,
            route: ResidualRoute::Dense,
        };
        assert_eq!(verify_prop3_experiment(&exp).unwrap().probability, 1.0);
    }
}
