use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::params::{GradMap, ParamStore};
use crate::tensor::Tensor;
use crate::{AutodiffError, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment tensors are allocated lazily per
/// parameter and track its shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub cfg: AdamConfig,
    first: BTreeMap<String, Tensor>,
    second: BTreeMap<String, Tensor>,
    step_count: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update. Validates every gradient before touching any parameter,
    /// so a non-finite gradient aborts the whole step.
    pub fn step(&mut self, params: &mut ParamStore, grads: &GradMap) -> Result<()> {
        for (name, g) in grads {
            if !g.is_finite() {
                return Err(AutodiffError::NonFiniteGradient(name.clone()));
            }
            let p = params.get(name)?;
            if !p.same_shape(g) {
                return Err(AutodiffError::ShapeMismatch {
                    op: "adam_step",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
        }
        self.step_count += 1;
        let t = self.step_count;
        let c = self.cfg;
        let bias1 = 1.0 - c.beta1.powi(t as i32);
        let bias2 = 1.0 - c.beta2.powi(t as i32);
        for (name, g) in grads {
            let m = self
                .first
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self
                .second
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            let p = params.get_mut(name)?;
            for i in 0..g.numel() {
                let gi = g.data()[i];
                let mi = c.beta1 * m.data()[i] + (1.0 - c.beta1) * gi;
                let vi = c.beta2 * v.data()[i] + (1.0 - c.beta2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bias1;
                let v_hat = vi / bias2;
                p.data_mut()[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}
