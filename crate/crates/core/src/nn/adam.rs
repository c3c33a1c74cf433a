//! Adam optimizer with bias correction.

use super::tensor::Param;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Optimizer state: first/second moment estimates per parameter plus the
/// step counter. Moments are allocated lazily on the first step and must
/// keep matching the parameter list afterwards.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub step_count: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self { cfg, step_count: 0, moments: Vec::new() }
    }

    /// One bias-corrected update over `params`, reading `grad` slots.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| (vec![0.0; p.value.numel()], vec![0.0; p.value.numel()]))
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam has {} moment slots for {} params",
                self.moments.len(),
                params.len()
            )));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        for (p, (m, v)) in params.iter_mut().zip(self.moments.iter_mut()) {
            if p.value.numel() != m.len() {
                return Err(Error::ShapeMismatch(format!(
                    "adam moment size {} vs param {} ({})",
                    m.len(),
                    p.value.numel(),
                    p.name
                )));
            }
            for i in 0..m.len() {
                let g = p.grad.data[i];
                m[i] = self.cfg.beta1 * m[i] + (1.0 - self.cfg.beta1) * g;
                v[i] = self.cfg.beta2 * v[i] + (1.0 - self.cfg.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.value.data[i] -= self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
        }
        Ok(())
    }
}
