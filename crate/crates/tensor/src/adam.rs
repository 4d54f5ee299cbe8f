//! Adam with bias correction and coupled (L2) weight decay.

use std::collections::BTreeMap;

use crate::error::{Result, TensorError};
use crate::params::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    /// N-body settings: lr 1e-4, weight decay 1e-8.
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    /// Zeroed moment buffers for every parameter in `params`.
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros = |t: &crate::Tensor| vec![0.0; t.len()];
        Self {
            config,
            step: 0,
            first: params.iter().map(|(n, t)| (n.to_string(), zeros(t))).collect(),
            second: params.iter().map(|(n, t)| (n.to_string(), zeros(t))).collect(),
        }
    }

    pub fn first_moment(&self, name: &str) -> Option<&[f64]> {
        self.first.get(name).map(Vec::as_slice)
    }

    pub fn second_moment(&self, name: &str) -> Option<&[f64]> {
        self.second.get(name).map(Vec::as_slice)
    }
}

/// One Adam update of `params` in place.
///
/// Every gradient name must exist in `params`; parameters without a gradient
/// are left untouched. The whole step is validated before any parameter is
/// modified, so an error leaves `params` and `state` unchanged.
pub fn adam_step(params: &mut ParamSet, grads: &ParamSet, state: &mut AdamState) -> Result<()> {
    for (name, g) in grads.iter() {
        let p = params.get(name).ok_or_else(|| TensorError::UnknownParameter {
            name: name.to_string(),
        })?;
        if p.shape() != g.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        if g.data().iter().any(|v| v.is_nan()) {
            return Err(TensorError::NanGradient {
                name: name.to_string(),
            });
        }
        let ok = |m: &BTreeMap<String, Vec<f64>>| m.get(name).is_some_and(|b| b.len() == g.len());
        if !ok(&state.first) || !ok(&state.second) {
            return Err(TensorError::MissingMoment {
                name: name.to_string(),
            });
        }
    }

    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
        weight_decay,
    } = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);

    for (name, g) in grads.iter() {
        let p = params.get_mut(name).expect("validated").data_mut();
        let m = state.first.get_mut(name).expect("validated");
        let s = state.second.get_mut(name).expect("validated");
        for i in 0..p.len() {
            let gi = g.data()[i] + weight_decay * p[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            s[i] = beta2 * s[i] + (1.0 - beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let s_hat = s[i] / bc2;
            p[i] -= lr * m_hat / (s_hat.sqrt() + eps);
        }
    }
    Ok(())
}
