use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::tensor::Scalar;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators for one parameter set.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    pub config: AdamConfig,
    first: ParamSet<F>,
    second: ParamSet<F>,
    step: u64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(config: AdamConfig, params: &ParamSet<F>) -> Self {
        Self {
            config,
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &ParamSet<F> {
        &self.first
    }

    pub fn second_moment(&self) -> &ParamSet<F> {
        &self.second
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<F: Scalar>(
    params: &mut ParamSet<F>,
    grads: &ParamSet<F>,
    state: &mut AdamState<F>,
) -> Result<()> {
    if !params.same_layout(grads) || !params.same_layout(&state.first) {
        return invalid("adam: parameter, gradient and state shapes disagree");
    }
    state.step += 1;
    let c = state.config;
    let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
    let (one, eps, lr) = (F::one(), F::of(c.epsilon), F::of(c.learning_rate));
    let t = state.step as i32;
    let bc1 = F::of(1.0 - c.beta1.powi(t));
    let bc2 = F::of(1.0 - c.beta2.powi(t));
    for (((p, g), m), v) in params
        .tensors_mut()
        .iter_mut()
        .zip(grads.tensors())
        .zip(state.first.tensors_mut())
        .zip(state.second.tensors_mut())
    {
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut())
        {
            *mv = b1 * *mv + (one - b1) * gv;
            *vv = b2 * *vv + (one - b2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
