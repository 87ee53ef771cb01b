//! Scaling benchmark: time affinity construction and clustering as `n`
//! grows with `m` fixed.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::autoencoder::Activation;
use crate::dataset::{generate_union_of_subspaces, GeneratorConfig};
use crate::error::{Error, Result};
use crate::self_expression::{block_coordinate_fit, AnchorCount, FitConfig};
use crate::spectral::{cluster_embedding, spectral_embedding, SpectralConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Sample counts, ascending; each must be a multiple of the subspace count.
    pub n_list: Vec<usize>,
    pub repeats: usize,
    pub anchors: usize,
    pub clusters: usize,
    /// Generator template; `points_per_subspace` is overridden per `n`.
    pub generator: GeneratorConfig,
    pub hidden: Vec<usize>,
    pub latent: usize,
    pub pretrain_epochs: usize,
    /// Outer iterations run in full (no early stop) so work per `n` is fixed.
    pub outer_iterations: usize,
    pub seed: u64,
    pub spectral: SpectralConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_list: vec![1000, 2000, 4000, 8000],
            repeats: 3,
            anchors: 50,
            clusters: 10,
            generator: GeneratorConfig::standard(1, 0),
            hidden: Vec::new(),
            latent: 64,
            pretrain_epochs: 5,
            outer_iterations: 5,
            seed: 0,
            spectral: SpectralConfig::default(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.repeats == 0 || self.outer_iterations == 0 {
            return Err(Error::config("n_list, repeats and outer_iterations must be non-empty / >= 1"));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("n_list must be strictly ascending"));
        }
        let s = self.generator.subspaces;
        if let Some(&n) = self.n_list.iter().find(|&&n| s == 0 || n % s != 0) {
            return Err(Error::config(format!("n = {n} is not a multiple of the subspace count {s}")));
        }
        if self.clusters == 0 || self.clusters > self.anchors {
            return Err(Error::config(format!(
                "clusters k = {} must satisfy 1 <= k <= m = {}",
                self.clusters, self.anchors
            )));
        }
        if self.anchors > self.n_list[0] {
            return Err(Error::config(format!(
                "anchors m = {} exceeds the smallest n = {}; need m <= n",
                self.anchors, self.n_list[0]
            )));
        }
        self.spectral.validate()
    }

    fn fit_config(&self, seed: u64) -> FitConfig {
        let mut layer_dims = vec![self.generator.ambient_dim];
        layer_dims.extend(&self.hidden);
        layer_dims.push(self.latent);
        FitConfig {
            anchors: AnchorCount::Fixed(self.anchors),
            layer_dims,
            latent_activation: Activation::Relu,
            pretrain_epochs: self.pretrain_epochs,
            max_outer: self.outer_iterations,
            threshold: 0.0,
            seed,
            ..FitConfig::default()
        }
    }
}

/// Median timings in seconds for one `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub pretrain: f64,
    pub affinity: f64,
    pub spectral: f64,
    pub kmeans: f64,
    /// `affinity + spectral + kmeans`, median over repeats.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Least-squares slope of `ln total` against `ln n`.
    pub slope: f64,
}

impl BenchReport {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("n\tpretrain_s\taffinity_s\tspectral_s\tkmeans_s\ttotal_s\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                r.n, r.pretrain, r.affinity, r.spectral, r.kmeans, r.total
            );
        }
        let _ = writeln!(s, "# loglog_slope\t{:.4}", self.slope);
        s
    }

    /// Whether medians never decrease with `n`.
    pub fn monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].total >= w[0].total)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    if v.len() % 2 == 1 {
        v[h]
    } else {
        0.5 * (v[h - 1] + v[h])
    }
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn loglog_slope(n: &[f64], t: &[f64]) -> Result<f64> {
    if n.len() != t.len() || n.len() < 2 {
        return Err(Error::shape("slope needs at least two matching points"));
    }
    if n.iter().chain(t).any(|&v| !(v > 0.0)) {
        return Err(Error::domain("log-log slope needs positive values"));
    }
    let x: Vec<f64> = n.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

pub fn scaling_benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let mut gen = cfg.generator.clone();
        gen.points_per_subspace = n / gen.subspaces;
        gen.seed = cfg.seed;
        let data = generate_union_of_subspaces(&gen)?.data;
        let fit_cfg = cfg.fit_config(cfg.seed);
        let mut samples = [const { Vec::new() }; 5];
        for rep in 0..cfg.repeats {
            let model = block_coordinate_fit(&data, &fit_cfg)?;
            let t = std::time::Instant::now();
            let (emb, _) = spectral_embedding(&model.projector, cfg.clusters, cfg.seed, &cfg.spectral)?;
            let spectral = t.elapsed().as_secs_f64();
            let t = std::time::Instant::now();
            cluster_embedding(&emb, cfg.clusters, cfg.seed, &cfg.spectral)?;
            let kmeans = t.elapsed().as_secs_f64();
            log::info!("bench n = {n} repeat {rep}: fit {:.3}s", model.fit_seconds);
            for (slot, v) in samples.iter_mut().zip([
                model.pretrain_seconds,
                model.fit_seconds,
                spectral,
                kmeans,
                model.fit_seconds + spectral + kmeans,
            ]) {
                slot.push(v);
            }
        }
        let [pretrain, affinity, spectral, kmeans, total] = samples.map(median);
        rows.push(BenchRow {
            n,
            pretrain,
            affinity,
            spectral,
            kmeans,
            total,
        });
    }
    let slope = if rows.len() >= 2 {
        let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        let ts: Vec<f64> = rows.iter().map(|r| r.total).collect();
        loglog_slope(&ns, &ts)?
    } else {
        f64::NAN
    };
    Ok(BenchReport { rows, slope })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let n = [1.0, 2.0, 4.0, 8.0];
        let t: Vec<f64> = n.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((loglog_slope(&n, &t).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn rejects_unsorted_n() {
        let cfg = BenchConfig {
            n_list: vec![2000, 1000],
            ..BenchConfig::default()
        };
        assert!(matches!(scaling_benchmark(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn tiny_benchmark_runs() {
        let cfg = BenchConfig {
            n_list: vec![60, 120],
            repeats: 1,
            anchors: 10,
            clusters: 3,
            generator: GeneratorConfig {
                subspaces: 3,
                dim_min: 2,
                dim_max: 3,
                ambient_dim: 30,
                ..GeneratorConfig::standard(1, 0)
            },
            latent: 8,
            pretrain_epochs: 1,
            outer_iterations: 2,
            ..BenchConfig::default()
        };
        let rep = scaling_benchmark(&cfg).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert!(rep.rows.iter().all(|r| r.total > 0.0));
        assert!(rep.to_tsv().contains("loglog_slope"));
    }
}
