use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AdamConfig {
    pub lr: Real,
    pub beta1: Real,
    pub beta2: Real,
    pub epsilon: Real,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First/second moment accumulators for one flat parameter buffer.
///
/// The update uses explicit bias correction each step:
/// `m_hat = m / (1 - beta1^t)`, `v_hat = v / (1 - beta2^t)`,
/// `theta -= lr * m_hat / (sqrt(v_hat) + epsilon)`, so the very first step
/// moves each coordinate by `-lr * g / (|g| + epsilon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Real>,
    pub v: Vec<Real>,
    /// Number of updates applied so far.
    pub t: u64,
}

impl AdamState {
    pub fn new(numel: usize) -> Self {
        AdamState { m: vec![0.0; numel], v: vec![0.0; numel], t: 0 }
    }

    /// Apply one update in place. Gradient length must match the parameter.
    pub fn step(&mut self, cfg: &AdamConfig, theta: &mut [Real], grad: &[Real]) -> Result<()> {
        if theta.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "parameter {}, gradient {}, state {}",
                    theta.len(),
                    grad.len(),
                    self.m.len()
                ),
            ));
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            let delta = cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
            if !delta.is_finite() {
                return Err(Error::NonFinite { op: "adam_step" });
            }
            theta[i] -= delta;
        }
        Ok(())
    }
}
