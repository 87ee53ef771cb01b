//! k-means++ seeding and Lloyd iterations.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

fn dist2(points: &DMatrix<f64>, a: usize, center: &[f64]) -> f64 {
    points
        .column(a)
        .iter()
        .zip(center)
        .map(|(x, c)| (x - c) * (x - c))
        .sum()
}

/// k-means++ seeding over the columns of `points`: the first index is
/// uniform, each further index is drawn with probability proportional to
/// its squared distance to the nearest chosen point. When every remaining
/// distance is zero the next index is uniform over unchosen points, so the
/// returned indices are always distinct.
pub fn kmeanspp_seed<R: Rng + ?Sized>(points: &DMatrix<f64>, k: usize, rng: &mut R) -> Vec<usize> {
    let n = points.ncols();
    assert!(k >= 1 && k <= n, "k-means++ needs 1 <= k <= n");
    let mut chosen = vec![false; n];
    let mut order = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    chosen[first] = true;
    order.push(first);
    let mut d2: Vec<f64> = {
        let c: Vec<f64> = points.column(first).iter().copied().collect();
        (0..n).map(|j| dist2(points, j, &c)).collect()
    };
    while order.len() < k {
        let total: f64 = (0..n).filter(|&j| !chosen[j]).map(|j| d2[j]).sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            let mut last_positive = 0;
            for j in 0..n {
                if chosen[j] || d2[j] <= 0.0 {
                    continue;
                }
                last_positive = j;
                acc += d2[j];
                if acc > target {
                    pick = Some(j);
                    break;
                }
            }
            pick.unwrap_or(last_positive)
        } else {
            let free: Vec<usize> = (0..n).filter(|&j| !chosen[j]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[next] = true;
        order.push(next);
        let c: Vec<f64> = points.column(next).iter().copied().collect();
        for j in 0..n {
            let d = dist2(points, j, &c);
            if d < d2[j] {
                d2[j] = d;
            }
        }
    }
    order
}

/// Result of one k-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    /// `k×dim`, one centroid per row.
    pub centroids: DMatrix<f64>,
    /// Sum of squared distances to the assigned centroids.
    pub inertia: f64,
    /// Inertia after each Lloyd iteration.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
    /// True when the assignment reached a fixpoint before `max_iters`.
    pub converged: bool,
}

fn nearest(points: &DMatrix<f64>, j: usize, centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = dist2(points, j, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn total_inertia(points: &DMatrix<f64>, labels: &[usize], centers: &[Vec<f64>]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(j, &c)| dist2(points, j, &centers[c]))
        .sum()
}

/// Lloyd's algorithm on the rows of `h` (`n×dim`).
///
/// Empty clusters are repaired by moving the point farthest from its
/// centroid (among clusters with more than one member) into the empty
/// cluster.
pub fn kmeans(h: &DMatrix<f64>, k: usize, seed: u64, max_iters: usize) -> Result<ClusterAssignment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    kmeans_with_rng(h, k, max_iters, &mut rng)
}

fn kmeans_with_rng(h: &DMatrix<f64>, k: usize, max_iters: usize, rng: &mut ChaCha8Rng) -> Result<ClusterAssignment> {
    let n = h.nrows();
    if k == 0 || k > n {
        return Err(Error::config(format!("k = {k} must lie in [1, n = {n}]")));
    }
    if max_iters == 0 {
        return Err(Error::config("max_iters must be >= 1"));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("k-means input has non-finite entries".into()));
    }
    let points = h.transpose();
    let dim = points.nrows();
    let seeds = kmeanspp_seed(&points, k, rng);
    let mut centers: Vec<Vec<f64>> = seeds
        .iter()
        .map(|&j| points.column(j).iter().copied().collect())
        .collect();
    let mut labels = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for j in 0..n {
            let (c, d) = nearest(&points, j, &centers);
            if labels[j] != c {
                labels[j] = c;
                changed = true;
            }
            dists[j] = d;
        }
        let mut sizes = vec![0usize; k];
        for &c in &labels {
            sizes[c] += 1;
        }
        for empty in 0..k {
            if sizes[empty] > 0 {
                continue;
            }
            let mut far = None;
            let mut far_d = -1.0;
            for j in 0..n {
                if sizes[labels[j]] > 1 && dists[j] > far_d {
                    far_d = dists[j];
                    far = Some(j);
                }
            }
            let j = far.expect("k <= n leaves a cluster with two members");
            sizes[labels[j]] -= 1;
            labels[j] = empty;
            sizes[empty] = 1;
            dists[j] = 0.0;
            centers[empty] = points.column(j).iter().copied().collect();
            changed = true;
        }
        if !changed {
            converged = true;
            iterations -= 1;
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        for (j, &c) in labels.iter().enumerate() {
            for (s, x) in sums[c].iter_mut().zip(points.column(j).iter()) {
                *s += x;
            }
        }
        for c in 0..k {
            let inv = 1.0 / sizes[c] as f64;
            centers[c] = sums[c].iter().map(|s| s * inv).collect();
        }
        trace.push(total_inertia(&points, &labels, &centers));
    }
    if !converged {
        // one more assignment pass decides whether the last update moved anything
        converged = (0..n).all(|j| nearest(&points, j, &centers).0 == labels[j]);
    }
    let inertia = total_inertia(&points, &labels, &centers);
    let centroids = DMatrix::from_fn(k, dim, |c, i| centers[c][i]);
    Ok(ClusterAssignment {
        labels,
        centroids,
        inertia,
        inertia_trace: trace,
        iterations,
        converged,
    })
}

/// Best of `restarts` runs by inertia. Restart `r` draws from stream `r` of
/// the seeded generator.
pub fn kmeans_restarts(
    h: &DMatrix<f64>,
    k: usize,
    seed: u64,
    max_iters: usize,
    restarts: usize,
) -> Result<ClusterAssignment> {
    let mut best: Option<ClusterAssignment> = None;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let run = kmeans_with_rng(h, k, max_iters, &mut rng)?;
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::standard_normal_matrix;

    #[test]
    fn separated_clouds_split_perfectly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut h = standard_normal_matrix(40, 2, &mut rng) * 0.1;
        for i in 20..40 {
            h[(i, 0)] += 100.0;
        }
        for seed in 0..5 {
            let a = kmeans(&h, 2, seed, 100).unwrap();
            assert!(a.labels[..20].iter().all(|&l| l == a.labels[0]));
            assert!(a.labels[20..].iter().all(|&l| l == a.labels[20]));
            assert_ne!(a.labels[0], a.labels[20]);
        }
    }

    #[test]
    fn singletons_have_zero_inertia() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = standard_normal_matrix(7, 3, &mut rng);
        let a = kmeans(&h, 7, 0, 100).unwrap();
        assert_eq!(a.inertia, 0.0);
        let mut l = a.labels.clone();
        l.sort_unstable();
        assert_eq!(l, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn duplicate_points_with_k_equal_n() {
        let h = DMatrix::from_element(4, 2, 1.0);
        let a = kmeans(&h, 4, 3, 10).unwrap();
        assert_eq!(a.inertia, 0.0);
        assert!(a.labels.iter().all(|&l| l < 4));
    }

    #[test]
    fn trace_is_monotone_and_fixpoint_is_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = standard_normal_matrix(12, 2, &mut rng);
        for seed in 0..20 {
            let a = kmeans(&h, 3, seed, 100).unwrap();
            for w in a.inertia_trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
            assert!(a.converged);
            let centers: Vec<Vec<f64>> = a.centroids.row_iter().map(|r| r.iter().copied().collect()).collect();
            let pts = h.transpose();
            for j in 0..12 {
                assert_eq!(nearest(&pts, j, &centers).0, a.labels[j]);
            }
        }
    }

    #[test]
    fn inertia_matches_assignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = standard_normal_matrix(30, 4, &mut rng);
        let a = kmeans_restarts(&h, 4, 1, 100, 3).unwrap();
        let mut want = 0.0;
        for i in 0..30 {
            want += (h.row(i) - a.centroids.row(a.labels[i])).norm_squared();
        }
        assert!((a.inertia - want).abs() < 1e-10);
    }

    #[test]
    fn errors() {
        let h = DMatrix::<f64>::zeros(3, 2);
        assert!(matches!(kmeans(&h, 4, 0, 10), Err(Error::Config(_))));
        assert!(matches!(kmeans(&h, 2, 0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = standard_normal_matrix(50, 3, &mut rng);
        assert_eq!(kmeans(&h, 5, 9, 100).unwrap(), kmeans(&h, 5, 9, 100).unwrap());
    }
}
