//! Clustering evaluation and the affinity convergence diagnostic.

use std::collections::HashMap;
use std::fmt::Write as _;

use log::warn;
use nalgebra::DMatrix;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;

use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, symmetric_eigen_ascending};
use crate::self_expression::{ProjectorP, DENSE_CAP};

fn check_lengths(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "label vectors have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::shape("label vectors are empty"));
    }
    Ok(())
}

/// Map arbitrary label values to `0..k` in order of first appearance.
fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(*l).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

fn contingency(pred: &[usize], truth: &[usize]) -> (Vec<Vec<usize>>, usize, usize) {
    let (p, kp) = compact(pred);
    let (t, kt) = compact(truth);
    let mut table = vec![vec![0usize; kt]; kp];
    for (a, b) in p.iter().zip(&t) {
        table[*a][*b] += 1;
    }
    (table, kp, kt)
}

/// Best fraction of agreeing labels over one-to-one label matchings.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let (table, kp, kt) = contingency(pred, truth);
    let k = kp.max(kt);
    let weights = Matrix::from_fn(k, k, |(i, j)| {
        if i < kp && j < kt {
            table[i][j] as i64
        } else {
            0
        }
    });
    let (matched, _) = kuhn_munkres(&weights);
    Ok(matched as f64 / pred.len() as f64)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `I(pred; truth) / sqrt(H(pred)·H(truth))` with natural logarithms.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let n = pred.len() as f64;
    let (table, kp, kt) = contingency(pred, truth);
    let rows: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<usize> = (0..kt).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let hp = entropy(rows.iter().copied(), n);
    let ht = entropy(cols.iter().copied(), n);
    if hp == 0.0 || ht == 0.0 {
        // both single-cluster means the partitions coincide
        return Ok(if kp == 1 && kt == 1 { 1.0 } else { 0.0 });
    }
    let mut mi = 0.0;
    for i in 0..kp {
        for j in 0..kt {
            let c = table[i][j];
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (hp * ht).sqrt()).clamp(0.0, 1.0))
}

/// Subspace preserving error with the number of zero-mass columns skipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeResult {
    pub value: f64,
    pub zero_mass_columns: usize,
}

const SPE_BLOCK: usize = 256;

/// `(1/n)·Σⱼ (Σ_{i: tᵢ≠tⱼ} |Cᵢⱼ|) / (Σᵢ |Cᵢⱼ|)` for `C = PPᵀ`, evaluated in
/// row blocks of `C` so memory stays `O(n·block)`.
pub fn spe_detailed(p: &ProjectorP, truth: &[usize]) -> Result<SpeResult> {
    let pv = p.values();
    let n = pv.nrows();
    if truth.len() != n {
        return Err(Error::shape(format!(
            "P has {n} rows, truth has {} labels",
            truth.len()
        )));
    }
    let pt = pv.transpose();
    let mut total = 0.0;
    let mut zero = 0;
    let mut start = 0;
    while start < n {
        let len = SPE_BLOCK.min(n - start);
        let block = pv.rows(start, len) * &pt;
        // C is symmetric, so row j carries the mass of column j
        for r in 0..len {
            let j = start + r;
            let mut mass = 0.0;
            let mut foreign = 0.0;
            for i in 0..n {
                let a = block[(r, i)].abs();
                mass += a;
                if truth[i] != truth[j] {
                    foreign += a;
                }
            }
            if mass > 0.0 {
                total += foreign / mass;
            } else {
                zero += 1;
            }
        }
        start += len;
    }
    if zero > 0 {
        warn!("SPE: {zero} columns with zero affinity mass contribute 0");
    }
    Ok(SpeResult {
        value: total / n as f64,
        zero_mass_columns: zero,
    })
}

pub fn spe(p: &ProjectorP, truth: &[usize]) -> Result<f64> {
    Ok(spe_detailed(p, truth)?.value)
}

/// Per-cluster connectivity and its minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnResult {
    pub min: f64,
    /// Indexed by ground-truth label in order of first appearance.
    pub per_cluster: Vec<f64>,
    /// Clusters scored 0 because a vertex had zero degree.
    pub isolated_clusters: usize,
}

/// Second-smallest eigenvalue of `I − D^{-1/2} W D^{-1/2}` for a
/// nonnegative symmetric weight matrix with zero diagonal, or `None` when a
/// vertex is isolated.
pub fn normalized_fiedler_value(w: &DMatrix<f64>) -> Result<Option<f64>> {
    let q = w.nrows();
    if q < 2 {
        return Ok(None);
    }
    let deg: Vec<f64> = w.row_iter().map(|r| r.sum()).collect();
    if deg.iter().any(|&d| d <= 0.0) {
        return Ok(None);
    }
    let lap = DMatrix::from_fn(q, q, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - w[(i, j)] / (deg[i] * deg[j]).sqrt()
    });
    let (vals, _) = symmetric_eigen_ascending(&lap)?;
    Ok(Some(vals[1]))
}

/// Minimum over ground-truth clusters of the normalized-Laplacian Fiedler
/// value of the induced subgraph of `|PPᵀ|` (self-loops excluded).
pub fn conn_detailed(p: &ProjectorP, truth: &[usize], cap: usize) -> Result<ConnResult> {
    let n = p.n();
    if truth.len() != n {
        return Err(Error::shape(format!(
            "P has {n} rows, truth has {} labels",
            truth.len()
        )));
    }
    if n > cap {
        return Err(Error::OracleScale { n, cap });
    }
    let (labels, k) = compact(truth);
    let mut members = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let pv = p.values();
    let mut per_cluster = Vec::with_capacity(k);
    let mut isolated = 0;
    for (c, idx) in members.iter().enumerate() {
        let sub = pv.select_rows(idx);
        let mut w = (&sub * sub.transpose()).abs();
        w.fill_diagonal(0.0);
        match normalized_fiedler_value(&w)? {
            Some(v) => per_cluster.push(v.max(0.0)),
            None => {
                warn!("CONN: cluster {c} has an isolated vertex, scored 0");
                isolated += 1;
                per_cluster.push(0.0);
            }
        }
    }
    let min = per_cluster.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(ConnResult {
        min,
        per_cluster,
        isolated_clusters: isolated,
    })
}

pub fn conn(p: &ProjectorP, truth: &[usize]) -> Result<f64> {
    Ok(conn_detailed(p, truth, DENSE_CAP)?.min)
}

/// `‖P₁P₁ᵀ − P₀P₀ᵀ‖_F / ‖P₀P₀ᵀ‖_F` in `O(nm²)` without forming `n×n`
/// matrices. With orthonormal columns the squared numerator
/// `‖P₁ᵀP₁‖² + ‖P₀ᵀP₀‖² − 2‖P₁ᵀP₀‖²` equals
/// `‖P₁ − P₀(P₀ᵀP₁)‖² + ‖P₀ − P₁(P₁ᵀP₀)‖²`, which is evaluated instead
/// because it does not cancel when the projectors are close.
pub fn affinity_relative_change(p_now: &ProjectorP, p_prev: &ProjectorP) -> Result<f64> {
    let (a, b) = (p_now.values(), p_prev.values());
    if a.nrows() != b.nrows() {
        return Err(Error::shape(format!(
            "projectors have {} and {} rows",
            a.nrows(),
            b.nrows()
        )));
    }
    let prev = frobenius_sq(&b.tr_mul(b));
    if prev == 0.0 {
        return Err(Error::UndefinedDenominator(
            "previous affinity has zero norm".into(),
        ));
    }
    let cross = b.tr_mul(a);
    let num = frobenius_sq(&(a - b * &cross)) + frobenius_sq(&(b - a * cross.transpose()));
    Ok(num.sqrt() / prev.sqrt())
}

/// The four clustering scores for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub acc: f64,
    pub nmi: f64,
    pub spe: f64,
    /// `None` when `n` exceeds the dense cap.
    pub conn: Option<f64>,
    pub conn_per_cluster: Vec<f64>,
    pub n: usize,
    pub k: usize,
}

impl MetricsReport {
    pub fn compute(pred: &[usize], truth: &[usize], p: &ProjectorP, k: usize, dense_cap: usize) -> Result<Self> {
        let (conn, conn_per_cluster) = if p.n() <= dense_cap {
            let c = conn_detailed(p, truth, dense_cap)?;
            (Some(c.min), c.per_cluster)
        } else {
            (None, Vec::new())
        };
        Ok(Self {
            acc: clustering_accuracy(pred, truth)?,
            nmi: nmi(pred, truth)?,
            spe: spe(p, truth)?,
            conn,
            conn_per_cluster,
            n: pred.len(),
            k,
        })
    }

    /// `key=value` lines.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "acc={}", self.acc);
        let _ = writeln!(s, "nmi={}", self.nmi);
        let _ = writeln!(s, "spe={}", self.spe);
        match self.conn {
            Some(c) => {
                let _ = writeln!(s, "conn={c}");
                let per: Vec<String> = self.conn_per_cluster.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(s, "conn_per_cluster={}", per.join(","));
            }
            None => {
                let _ = writeln!(s, "conn=skipped");
            }
        }
        let _ = writeln!(s, "n={}", self.n);
        let _ = writeln!(s, "k={}", self.k);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_column_orthonormal, random_orthogonal};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn proj(m: DMatrix<f64>) -> ProjectorP {
        ProjectorP::new(m).unwrap()
    }

    #[test]
    fn accuracy_examples() {
        let t = [0, 0, 1, 1, 2, 2];
        assert_eq!(clustering_accuracy(&t, &t).unwrap(), 1.0);
        let relabeled = [2, 2, 0, 0, 1, 1];
        assert_eq!(clustering_accuracy(&relabeled, &t).unwrap(), 1.0);
        assert_eq!(clustering_accuracy(&[0, 0, 0, 1], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert!(clustering_accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn accuracy_with_more_predicted_clusters() {
        assert_eq!(clustering_accuracy(&[0, 1, 2, 3], &[0, 0, 1, 1]).unwrap(), 0.5);
    }

    #[test]
    fn nmi_examples() {
        let t = [0, 0, 1, 1];
        assert!((nmi(&t, &t).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(nmi(&[0, 0, 0, 0], &t).unwrap(), 0.0);
        assert_eq!(nmi(&[3, 3], &[1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn nmi_two_flips() {
        // 8 points, classes 4/4, two points flipped across
        let truth = [0, 0, 0, 0, 1, 1, 1, 1];
        let pred = [0, 0, 0, 1, 1, 1, 1, 0];
        // table [[3,1],[1,3]], marginals 4/4
        let mi = 2.0 * (3.0 / 8.0) * (1.5f64).ln() + 2.0 * (1.0 / 8.0) * (0.5f64).ln();
        let want = mi / std::f64::consts::LN_2;
        assert!((nmi(&pred, &truth).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn spe_examples() {
        // block-diagonal affinity aligned with truth
        let mut p = DMatrix::zeros(4, 2);
        let h = 0.5f64.sqrt();
        p[(0, 0)] = h;
        p[(1, 0)] = h;
        p[(2, 1)] = h;
        p[(3, 1)] = h;
        assert_eq!(spe(&proj(p), &[0, 0, 1, 1]).unwrap(), 0.0);

        // constant affinity 1/n with k equal clusters
        let n = 6;
        let uniform = proj(DMatrix::from_element(n, 1, 1.0 / (n as f64).sqrt()));
        let v = spe(&uniform, &[0, 0, 1, 1, 2, 2]).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(spe(&uniform, &[4; 6]).unwrap(), 0.0);
    }

    #[test]
    fn conn_examples() {
        // cluster split into two components
        let mut p = DMatrix::zeros(4, 2);
        let h = 0.5f64.sqrt();
        p[(0, 0)] = h;
        p[(1, 0)] = h;
        p[(2, 1)] = h;
        p[(3, 1)] = h;
        assert!(conn(&proj(p.clone()), &[0, 0, 0, 0]).unwrap().abs() < 1e-12);
        // q = 2 with one edge
        assert!((conn(&proj(p), &[0, 0, 1, 1]).unwrap() - 2.0).abs() < 1e-12);
        // complete uniform graph of size q
        let q = 5;
        let uniform = proj(DMatrix::from_element(q, 1, 1.0 / (q as f64).sqrt()));
        let v = conn(&uniform, &[0; 5]).unwrap();
        assert!((v - q as f64 / (q as f64 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn conn_isolated_vertex_scores_zero() {
        let p = proj(DMatrix::identity(3, 3));
        let r = conn_detailed(&p, &[0, 0, 1], DENSE_CAP).unwrap();
        assert_eq!(r.per_cluster, vec![0.0, 0.0]);
        assert_eq!(r.isolated_clusters, 2);
    }

    #[test]
    fn relative_change_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_column_orthonormal(30, 4, &mut rng);
        let r = random_orthogonal(4, &mut rng);
        let a = proj(p.clone());
        assert!(affinity_relative_change(&a, &a).unwrap() < 1e-12);
        assert!(affinity_relative_change(&proj(&p * r), &a).unwrap() < 1e-12);

        let b = proj(random_column_orthonormal(30, 4, &mut rng));
        let dense = (p.clone() * p.transpose() - b.values() * b.values().transpose()).norm()
            / (b.values() * b.values().transpose()).norm();
        assert!((affinity_relative_change(&a, &b).unwrap() - dense).abs() < 1e-10);
    }

    #[test]
    fn report_serializes() {
        let p = proj(DMatrix::from_element(4, 1, 0.5));
        let rep = MetricsReport::compute(&[0, 0, 1, 1], &[0, 0, 1, 1], &p, 2, 10).unwrap();
        let kv = rep.to_kv();
        assert!(kv.contains("acc=1\n"));
        assert!(kv.contains("spe=0.5\n"));
    }
}
