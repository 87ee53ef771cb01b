//! Markov bounds on how far `C*` is from an idempotent projector when
//! `λ ~ U[0, 1]`, and Monte-Carlo estimates of the probabilities they bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::domain(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

/// `(1/δ)·[1 + β·ln(β/(1+β))]`, which is `E[λ/(β+λ)]/δ`.
pub fn prop2_bound(beta: f64, delta: f64) -> Result<f64> {
    check_positive("beta", beta)?;
    check_positive("delta", delta)?;
    // ln(β/(1+β)) = −ln(1 + 1/β); ln_1p keeps precision for large β
    Ok((1.0 - beta * (1.0 / beta).ln_1p()) / delta)
}

/// `g(β) = (2β+1)/(β+1) + 2β·ln(β/(β+1))`, which is `E[(λ/(β+λ))²]`.
pub fn prop3_g(beta: f64) -> Result<f64> {
    check_positive("beta", beta)?;
    Ok((2.0 * beta + 1.0) / (beta + 1.0) - 2.0 * beta * (1.0 / beta).ln_1p())
}

/// `(1/δ)·Σᵢ g(βᵢ)`.
pub fn prop3_bound(betas: &[f64], delta: f64) -> Result<f64> {
    check_positive("delta", delta)?;
    if betas.is_empty() {
        return Err(Error::domain("betas must be non-empty"));
    }
    let mut sum = 0.0;
    for &b in betas {
        sum += prop3_g(b)?;
    }
    Ok(sum / delta)
}

/// Empirical probability with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub probability: f64,
    pub std_error: f64,
    pub draws: usize,
}

impl MonteCarloEstimate {
    fn from_hits(hits: usize, draws: usize) -> Self {
        let p = hits as f64 / draws as f64;
        Self {
            probability: p,
            std_error: (p * (1.0 - p) / draws as f64).sqrt(),
            draws,
        }
    }
}

fn estimate(draws: usize, seed: u64, mut event: impl FnMut(f64) -> bool) -> Result<MonteCarloEstimate> {
    if draws == 0 {
        return Err(Error::config("draws must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hits = (0..draws).filter(|_| event(rng.random::<f64>())).count();
    Ok(MonteCarloEstimate::from_hits(hits, draws))
}

/// `Pr(|τ − 1| ≥ δ)` with `τ = β/(β+λ)`.
pub fn prop2_monte_carlo(beta: f64, delta: f64, draws: usize, seed: u64) -> Result<MonteCarloEstimate> {
    check_positive("beta", beta)?;
    check_positive("delta", delta)?;
    estimate(draws, seed, |lambda| (beta / (beta + lambda) - 1.0).abs() >= delta)
}

/// `Pr(Σᵢ (λ/(βᵢ+λ))² ≥ δ)`.
pub fn prop3_monte_carlo(betas: &[f64], delta: f64, draws: usize, seed: u64) -> Result<MonteCarloEstimate> {
    check_positive("delta", delta)?;
    for &b in betas {
        check_positive("beta", b)?;
    }
    estimate(draws, seed, |lambda| {
        betas.iter().map(|b| (lambda / (b + lambda)).powi(2)).sum::<f64>() >= delta
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prop2_direct_value() {
        let want = 2.0 * (1.0 - std::f64::consts::LN_2);
        assert!((prop2_bound(1.0, 0.5).unwrap() - want).abs() < 1e-14);
        assert!((prop2_bound(1.0, 0.5).unwrap() - 0.61371).abs() < 1e-5);
    }

    #[test]
    fn prop2_large_beta_series() {
        // 1 − β·ln(1 + 1/β) = 1/(2β) − 1/(3β²) + …
        for beta in [1e2f64, 1e3, 1e5] {
            let series = 1.0 / (2.0 * beta) - 1.0 / (3.0 * beta * beta) + 1.0 / (4.0 * beta.powi(3));
            let direct = prop2_bound(beta, 1.0).unwrap();
            assert!((direct - series).abs() < 1.0 / beta.powi(4) + 1e-14, "{beta}: {direct} vs {series}");
        }
    }

    #[test]
    fn prop3_direct_values() {
        let g1 = 1.5 - 2.0 * std::f64::consts::LN_2;
        assert!((prop3_bound(&[1.0], 1.0).unwrap() - g1).abs() < 1e-14);
        assert!((prop3_bound(&[1.0, 1.0], 2.0).unwrap() - g1).abs() < 1e-14);
        assert!((g1 - 0.11371).abs() < 1e-5);
    }

    #[test]
    fn g_matches_quadrature() {
        // E[(λ/(β+λ))²] by composite Simpson on [0, 1]
        for beta in [0.1, 1.0, 10.0] {
            let f = |l: f64| (l / (beta + l)).powi(2);
            let steps = 2000;
            let h = 1.0 / steps as f64;
            let mut s = f(0.0) + f(1.0);
            for i in 1..steps {
                s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            assert!((s * h / 3.0 - prop3_g(beta).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(prop2_bound(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(prop2_bound(1.0, -1.0), Err(Error::Domain(_))));
        assert!(matches!(prop3_bound(&[1.0, 0.0], 1.0), Err(Error::Domain(_))));
        assert!(matches!(prop3_bound(&[1.0], 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn bounds_dominate_estimates() {
        for beta in [0.5, 2.0] {
            for delta in [0.05, 0.2] {
                let e2 = prop2_monte_carlo(beta, delta, 20_000, 1).unwrap();
                assert!(prop2_bound(beta, delta).unwrap() >= e2.probability - 3.0 * e2.std_error);
                let e3 = prop3_monte_carlo(&[beta], delta, 20_000, 2).unwrap();
                assert!(prop3_bound(&[beta], delta).unwrap() >= e3.probability - 3.0 * e3.std_error);
            }
        }
    }
}
