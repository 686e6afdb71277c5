use alloc::collections::BTreeMap;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use super::{DenseMatrix, ParamTensor};
use crate::error::{bail, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay, applied as `lr · weight_decay · θ`.
    pub weight_decay: f64,
}

impl AdamWConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay }
    }
}

struct Moments {
    first: DenseMatrix,
    second: DenseMatrix,
}

/// AdamW with per-parameter moments keyed by tensor name.
pub struct AdamW {
    config: AdamWConfig,
    step: u64,
    moments: BTreeMap<String, Moments>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Result<Self> {
        if !(config.lr > 0.0 && config.lr.is_finite()) {
            bail!(InvalidArgument, "learning rate must be positive, got {}", config.lr);
        }
        if !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
            bail!(InvalidArgument, "betas must lie in [0, 1)");
        }
        if config.weight_decay < 0.0 {
            bail!(InvalidArgument, "weight decay must be non-negative");
        }
        Ok(Self { config, step: 0, moments: BTreeMap::new() })
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update over `params`. Every gradient is checked before any value
    /// changes; frozen tensors keep their values. All gradients are zeroed
    /// afterwards.
    pub fn step(&mut self, params: &mut [&mut ParamTensor]) -> Result<()> {
        for p in params.iter() {
            if !p.frozen && !p.grad.is_finite() {
                bail!(NonFinite, "gradient of parameter '{}'", p.name);
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - libm::pow(c.beta1, t as f64);
        let bias2 = 1.0 - libm::pow(c.beta2, t as f64);
        for p in params.iter_mut() {
            if p.frozen {
                p.zero_grad();
                continue;
            }
            let (rows, cols) = p.value.shape();
            let m = self.moments.entry(p.name.clone()).or_insert_with(|| Moments {
                first: DenseMatrix::zeros(rows, cols),
                second: DenseMatrix::zeros(rows, cols),
            });
            if m.first.shape() != (rows, cols) {
                bail!(Shape, "parameter '{}' changed shape between steps", p.name);
            }
            let values = p.value.as_mut_slice();
            let grads = p.grad.as_slice();
            let first = m.first.as_mut_slice();
            let second = m.second.as_mut_slice();
            for k in 0..values.len() {
                let g = grads[k];
                first[k] = c.beta1 * first[k] + (1.0 - c.beta1) * g;
                second[k] = c.beta2 * second[k] + (1.0 - c.beta2) * g * g;
                let m_hat = first[k] / bias1;
                let v_hat = second[k] / bias2;
                values[k] -= c.lr * (m_hat / (math::sqrt(v_hat) + c.eps) + c.weight_decay * values[k]);
            }
            p.zero_grad();
        }
        Ok(())
    }
}
