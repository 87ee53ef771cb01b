use serde::{Deserialize, Serialize};

use super::{Gradients, NetworkParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if !ok {
            return Err(Error::config(
                "adam needs learning_rate > 0, beta1 and beta2 in [0, 1), epsilon > 0",
            ));
        }
        Ok(())
    }
}

/// First and second moments, laid out like [`NetworkParams::slices`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &NetworkParams, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.slices().iter().map(|s| vec![0.0; s.len()]).collect();
        Self {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    /// One bias-corrected Adam update in place.
    pub fn step(&mut self, params: &mut NetworkParams, grads: &Gradients) -> Result<()> {
        let use_bias = params.use_bias;
        let g = grads.slices();
        let mut p = params.slices_mut();
        if g.len() != p.len() || p.len() != self.first.len() {
            return Err(Error::shape("gradient layout does not match parameters"));
        }
        for ((gs, ps), m) in g.iter().zip(p.iter()).zip(&self.first) {
            if gs.len() != ps.len() || ps.len() != m.len() {
                return Err(Error::shape("gradient layout does not match parameters"));
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (idx, ps) in p.iter_mut().enumerate() {
            // odd slots are biases
            let frozen = !use_bias && idx % 2 == 1;
            let (m, v) = (&mut self.first[idx], &mut self.second[idx]);
            for j in 0..ps.len() {
                let gj = g[idx][j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                if !frozen {
                    let m_hat = m[j] / c1;
                    let v_hat = v[j] / c2;
                    ps[j] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
        }
        Ok(())
    }
}
