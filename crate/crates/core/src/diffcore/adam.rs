//! Adam with coupled (L2-in-gradient) weight decay that respects freeze masks.

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::param::{ParamStore, Parameter};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Matrix,
    pub second_moment: Matrix,
    pub step_count: u64,
}

impl AdamState {
    pub fn for_param(param: &Parameter) -> Self {
        let (r, c) = param.value.shape();
        Self {
            first_moment: Matrix::zeros(r, c),
            second_moment: Matrix::zeros(r, c),
            step_count: 0,
        }
    }
}

/// One Adam update of `param` from its accumulated gradient; clears the gradient.
pub fn adam_step(param: &mut Parameter, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    let shape = param.value.shape();
    if state.first_moment.shape() != shape || state.second_moment.shape() != shape {
        return Err(Error::Shape {
            op: "adam_step",
            left: shape,
            right: state.first_moment.shape(),
        });
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);

    let mask = param.freeze_mask().to_vec();
    let value = param.value.as_mut_slice();
    let grad = param.grad.as_slice();
    let m = state.first_moment.as_mut_slice();
    let v = state.second_moment.as_mut_slice();
    for i in 0..value.len() {
        if mask[i] {
            continue;
        }
        let g = grad[i] + cfg.weight_decay * value[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        value[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    param.zero_grad();
    Ok(())
}

/// Adam over a whole [`ParamStore`]; one state per parameter, in store order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        Self {
            config,
            states: store.iter().map(AdamState::for_param).collect(),
        }
    }

    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.states.len() {
            return Err(Error::Contract(
                "optimizer state does not match parameter store".into(),
            ));
        }
        for (param, state) in store.iter_mut().zip(self.states.iter_mut()) {
            if param.is_fully_frozen() {
                param.zero_grad();
                continue;
            }
            adam_step(param, state, &self.config)?;
        }
        Ok(())
    }
}
