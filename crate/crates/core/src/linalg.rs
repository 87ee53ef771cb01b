//! Dense linear-algebra helpers shared across modules.
//!
//! Decompositions here apply a fixed sign convention (the largest-magnitude
//! entry of every left singular vector / eigenvector is positive) and sort
//! their spectra, so results are reproducible across runs.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Thin SVD `A = U diag(s) Vᵀ` with `s` sorted descending.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

/// nalgebra's bidiagonal SVD can silently return a wrong factorization for
/// nearly rank-deficient inputs, so the decomposition itself runs in faer.
pub fn thin_svd(a: &DMatrix<f64>) -> Result<ThinSvd> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("SVD input has non-finite entries".into()));
    }
    let fa = faer::Mat::<f64>::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    let svd = fa
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let (fu, fs, fv) = (svd.U(), svd.S().column_vector(), svd.V());
    let k = fs.nrows();
    let u = DMatrix::from_fn(fu.nrows(), k, |i, j| fu[(i, j)]);
    let v_t = DMatrix::from_fn(k, fv.nrows(), |i, j| fv[(j, i)]);
    let s = DVector::from_fn(k, |i, _| fs[i]);

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));

    let k = order.len();
    let mut u_sorted = DMatrix::zeros(u.nrows(), k);
    let mut v_sorted = DMatrix::zeros(v_t.ncols(), k);
    let mut s_sorted = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        v_sorted.set_column(dst, &v_t.row(src).transpose());
        s_sorted[dst] = s[src];
    }
    fix_signs(&mut u_sorted, Some(&mut v_sorted));
    Ok(ThinSvd {
        u: u_sorted,
        singular_values: s_sorted,
        v: v_sorted,
    })
}

/// Symmetric eigendecomposition with eigenvalues ascending. Ties keep the
/// solver's index order. The input is symmetrized as `(A + Aᵀ)/2` first.
pub fn symmetric_eigen_ascending(a: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if a.nrows() != a.ncols() {
        return Err(Error::shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(
            "eigendecomposition input has non-finite entries".into(),
        ));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .total_cmp(&eig.eigenvalues[j])
            .then(i.cmp(&j))
    });
    let mut values = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    fix_signs(&mut vectors, None);
    Ok((values, vectors))
}

/// Flip each column of `u` so its largest-magnitude entry is positive,
/// mirroring the flip onto the matching column of `v` when given.
pub fn fix_signs(u: &mut DMatrix<f64>, mut v: Option<&mut DMatrix<f64>>) {
    for j in 0..u.ncols() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for x in u.column(j).iter() {
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            u.column_mut(j).neg_mut();
            if let Some(v) = v.as_deref_mut() {
                v.column_mut(j).neg_mut();
            }
        }
    }
}

/// Extend the orthonormal columns of `basis` to `target` orthonormal columns
/// using standard basis vectors as candidates (deterministic Gram-Schmidt
/// with one re-orthogonalization pass).
pub fn orthonormal_complete(basis: &DMatrix<f64>, target: usize) -> Result<DMatrix<f64>> {
    let n = basis.nrows();
    if target > n {
        return Err(Error::shape(format!(
            "cannot fit {target} orthonormal columns in dimension {n}"
        )));
    }
    let mut cols: Vec<DVector<f64>> = basis.column_iter().map(|c| c.into_owned()).collect();
    let mut candidate = 0;
    while cols.len() < target {
        if candidate >= n {
            return Err(Error::Numerical(
                "orthonormal completion ran out of candidates".into(),
            ));
        }
        let mut v = DVector::zeros(n);
        v[candidate] = 1.0;
        candidate += 1;
        for _ in 0..2 {
            for c in &cols {
                let proj = c.dot(&v);
                v.axpy(-proj, c, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            cols.push(v / norm);
        }
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Squared Frobenius norm.
pub fn frobenius_sq(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Largest absolute entry of `AᵀA − I`.
pub fn orthonormality_defect(a: &DMatrix<f64>) -> f64 {
    let g = a.tr_mul(a);
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

pub fn standard_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// A random `n×m` matrix with orthonormal columns (QR of a Gaussian matrix).
pub fn random_column_orthonormal<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> DMatrix<f64> {
    assert!(m <= n, "need m <= n for orthonormal columns");
    let g = standard_normal_matrix(n, m, rng);
    g.qr().q()
}

/// A random `m×m` orthogonal matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(m: usize, rng: &mut R) -> DMatrix<f64> {
    random_column_orthonormal(m, m, rng)
}

/// Numerical rank from singular values: count of `σᵢ > rel_tol · σ₁`.
pub fn numerical_rank(singular_values: &DVector<f64>, rel_tol: f64) -> usize {
    let top = singular_values.iter().cloned().fold(0.0f64, f64::max);
    if top == 0.0 {
        return 0;
    }
    singular_values.iter().filter(|&&s| s > rel_tol * top).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn thin_svd_reconstructs_and_sorts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = standard_normal_matrix(9, 4, &mut rng);
        let svd = thin_svd(&a).unwrap();
        let back = &svd.u * DMatrix::from_diagonal(&svd.singular_values) * svd.v.transpose();
        assert!((back - &a).amax() < 1e-12);
        for w in svd.singular_values.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
        for j in 0..svd.u.ncols() {
            let col = svd.u.column(j);
            let idx = col.iamax();
            assert!(col[idx] > 0.0);
        }
    }

    #[test]
    fn eigen_ascending_on_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -1.0, 2.0]));
        let (vals, vecs) = symmetric_eigen_ascending(&a).unwrap();
        assert_eq!(vals.as_slice(), &[-1.0, 2.0, 3.0]);
        assert!((vecs[(1, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn completion_is_orthonormal() {
        let mut basis = DMatrix::zeros(5, 1);
        basis[(0, 0)] = 1.0;
        let full = orthonormal_complete(&basis, 4).unwrap();
        assert_eq!(full.ncols(), 4);
        assert!(orthonormality_defect(&full) < 1e-14);
        assert_eq!(full.column(0), basis.column(0));
    }
}
