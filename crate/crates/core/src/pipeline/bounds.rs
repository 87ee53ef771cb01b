//! Bound verification: Monte-Carlo grids against the Markov bounds and the
//! projector-approximation replication.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::self_expression::{
    prop2_bound, prop2_monte_carlo, prop3_bound, prop3_monte_carlo, verify_prop3_experiment, Prop3Experiment,
    Prop3Outcome, ResidualRoute,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub betas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub draws: usize,
    /// Allowed shortfall of a bound below the estimate, in standard errors.
    pub sigmas: f64,
    pub seed: u64,
    /// Replication: ranks `1..=max_rank`, `X ~ N(0,1)^{r×n}`.
    pub max_rank: usize,
    pub n: usize,
    pub delta: f64,
    pub trials: usize,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            betas: vec![0.1, 1.0, 10.0, 100.0],
            deltas: vec![0.01, 0.1, 0.5],
            draws: 100_000,
            sigmas: 3.0,
            seed: 0,
            max_rank: 100,
            n: 1000,
            delta: 1e-3,
            trials: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub bound_kind: &'static str,
    pub setting: String,
    pub bound: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub dominated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub rows: Vec<BoundRow>,
    pub replication: Prop3Outcome,
    pub replication_setting: String,
}

impl BoundsReport {
    pub fn all_dominated(&self) -> bool {
        self.rows.iter().all(|r| r.dominated)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("bound\tsetting\tbound_value\tempirical\tstd_error\tdominated\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}\t{}\t{:.6e}\t{:.6e}\t{:.3e}\t{}",
                r.bound_kind,
                r.setting,
                r.bound,
                r.empirical,
                r.std_error,
                if r.dominated { "yes" } else { "no" }
            );
        }
        let o = &self.replication;
        let _ = writeln!(
            s,
            "replication\t{}\t-\t{:.6}\t-\t{}/{} (max residual {:.3e})",
            self.replication_setting, o.probability, o.successes, o.total, o.max_residual
        );
        s
    }
}

fn row(kind: &'static str, setting: String, bound: f64, est: crate::self_expression::MonteCarloEstimate, sigmas: f64) -> BoundRow {
    BoundRow {
        bound_kind: kind,
        setting,
        bound,
        empirical: est.probability,
        std_error: est.std_error,
        dominated: bound >= est.probability - sigmas * est.std_error,
    }
}

/// Run both Monte-Carlo grids, a `δ ≥ r` sanity row and the replication
/// experiment with the factored residual.
pub fn verify_bounds(cfg: &BoundsConfig) -> Result<BoundsReport> {
    if cfg.betas.is_empty() || cfg.deltas.is_empty() || cfg.max_rank == 0 {
        return Err(Error::config("betas, deltas and max_rank must be non-empty / >= 1"));
    }
    let mut rows = Vec::new();
    let mut stream = 0u64;
    let mut next_seed = || {
        stream += 1;
        cfg.seed.wrapping_mul(0x100_0000).wrapping_add(stream)
    };
    for &beta in &cfg.betas {
        for &delta in &cfg.deltas {
            let setting = format!("beta={beta} delta={delta}");
            let est = prop2_monte_carlo(beta, delta, cfg.draws, next_seed())?;
            rows.push(row("single", setting.clone(), prop2_bound(beta, delta)?, est, cfg.sigmas));
            let est = prop3_monte_carlo(&[beta], delta, cfg.draws, next_seed())?;
            rows.push(row("spectrum", setting, prop3_bound(&[beta], delta)?, est, cfg.sigmas));
        }
    }
    // Every term of the residual is below 1, so δ = r is never reached.
    let r = cfg.betas.len() as f64;
    let est = prop3_monte_carlo(&cfg.betas, r, cfg.draws, next_seed())?;
    let mut trivial = row("spectrum", format!("betas={:?} delta=r={r}", cfg.betas), prop3_bound(&cfg.betas, r)?, est, cfg.sigmas);
    trivial.dominated &= est.probability == 0.0;
    rows.push(trivial);

    let exp = Prop3Experiment {
        ranks: (1..=cfg.max_rank).collect(),
        n: cfg.n,
        delta: cfg.delta,
        trials: cfg.trials,
        seed: cfg.seed,
        route: ResidualRoute::Factored,
    };
    let replication = verify_prop3_experiment(&exp)?;
    Ok(BoundsReport {
        rows,
        replication,
        replication_setting: format!(
            "r=1..{} n={} delta={} trials={}",
            cfg.max_rank, cfg.n, cfg.delta, cfg.trials
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid_is_dominated() {
        let cfg = BoundsConfig {
            draws: 5000,
            max_rank: 5,
            n: 100,
            trials: 2,
            ..BoundsConfig::default()
        };
        let rep = verify_bounds(&cfg).unwrap();
        assert_eq!(rep.rows.len(), 4 * 3 * 2 + 1);
        assert!(rep.all_dominated(), "{}", rep.to_tsv());
        assert_eq!(rep.rows.last().unwrap().empirical, 0.0);
        assert_eq!(rep.replication.total, 10);
    }
}
