use serde::{Deserialize, Serialize};

use super::params::{GradientMap, ParamTree, Role};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-2 }
    }
}

/// First/second moment accumulators for one parameter tree.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
    pub lr: f64,
    pub config: AdamWConfig,
}

impl OptimizerState {
    pub fn new<P: ParamTree + ?Sized>(params: &P, lr: f64, config: AdamWConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.arrays().iter().map(|a| vec![0.0; a.len()]).collect();
        Self { m: zeros.clone(), v: zeros, step: 0, lr, config }
    }
}

/// One AdamW update: bias-corrected Adam step plus decoupled weight decay
/// (`θ ← θ·(1 − η·wd)`) on arrays with [`Role::Weight`].
pub fn adamw_step<P: ParamTree + ?Sized>(
    params: &mut P,
    grads: &GradientMap,
    state: &mut OptimizerState,
) -> Result<()> {
    let mut arrays = params.arrays_mut();
    if arrays.len() != grads.0.len() || arrays.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adamw: {} parameter arrays, {} gradients, {} moment arrays",
            arrays.len(),
            grads.0.len(),
            state.m.len()
        )));
    }
    for (i, (a, g)) in arrays.iter().zip(&grads.0).enumerate() {
        if a.len() != g.len() || a.len() != state.m[i].len() {
            return Err(Error::Shape(format!("adamw: array {i} has {} values but gradient has {}", a.len(), g.len())));
        }
    }

    state.step += 1;
    let AdamWConfig { beta1, beta2, eps, weight_decay } = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    let lr = state.lr;

    for (i, a) in arrays.iter_mut().enumerate() {
        let decay = if a.role == Role::Weight { 1.0 - lr * weight_decay } else { 1.0 };
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for (k, p) in a.values.iter_mut().enumerate() {
            let gk = grads.0[i][k];
            m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
            v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            *p = *p * decay - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Multi-step learning-rate decay: `η₀ · γ^(milestones ≤ epoch)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub eta0: f64,
    pub gamma: f64,
    pub milestones: Vec<usize>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { eta0: 5e-3, gamma: 0.3, milestones: vec![2, 12] }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::Config(format!("eta0 must be positive, got {}", self.eta0)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("milestones must be strictly increasing, got {:?}", self.milestones)));
        }
        Ok(())
    }
}

pub fn lr_schedule(epoch: usize, config: &ScheduleConfig) -> f64 {
    let passed = config.milestones.iter().filter(|&&m| m <= epoch).count();
    config.eta0 * config.gamma.powi(passed as i32)
}
