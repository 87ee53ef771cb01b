use landmark_sc::linalg::random_column_orthonormal;
use landmark_sc::self_expression::ProjectorP;
use landmark_sc::spectral::{
    degree_vector, factor_svd, kmeans, lift_embedding, reduced_eigenproblem, reduced_matrix,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn projector(n: usize, m: usize, seed: u64) -> ProjectorP {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ProjectorP::new(random_column_orthonormal(n, m, &mut rng)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn degrees_match_dense_row_sums(n in 2usize..300, m in 1usize..8, seed in any::<u64>()) {
        prop_assume!(m <= n);
        let p = projector(n, m, seed);
        let c = p.values() * p.values().transpose();
        let d = degree_vector(&p);
        for i in 0..n {
            prop_assert!((d[i] - c.row(i).sum()).abs() <= 1e-10);
        }
        prop_assert!(c.symmetric_eigenvalues().min() >= -1e-10);
    }

    #[test]
    fn reduced_pairs_solve_the_reduced_equation(n in 6usize..60, m in 2usize..6, seed in any::<u64>()) {
        prop_assume!(m <= n);
        let p = projector(n, m, seed);
        let svd = factor_svd(&p).unwrap();
        let d = degree_vector(&p);
        let red = reduced_eigenproblem(&svd, &d, m.min(3)).unwrap();
        let a = reduced_matrix(&svd, &d).unwrap();
        for (j, mu) in red.mu.iter().enumerate() {
            let y = red.y.column(j);
            prop_assert!((&a * y - y * *mu).amax() <= 1e-8);
        }
        // lifted vectors satisfy the same equation through the dense Laplacian
        let h = lift_embedding(&svd, &red.y).unwrap();
        let c = p.values() * p.values().transpose();
        let lap = DMatrix::from_diagonal(&d) - &c;
        let q = &svd.q;
        for (j, mu) in red.mu.iter().enumerate() {
            let lhs = q.transpose() * &lap * h.column(j);
            prop_assert!((lhs - red.y.column(j) * *mu).amax() <= 1e-8);
        }
    }

    #[test]
    fn lloyd_inertia_never_increases(n in 5usize..80, dim in 1usize..4, k in 1usize..5, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = landmark_sc::linalg::standard_normal_matrix(n, dim, &mut rng);
        let out = kmeans(&h, k, seed, 100).unwrap();
        for w in out.inertia_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
        }
    }
}
