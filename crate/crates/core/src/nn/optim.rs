use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// SGD only.
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            momentum: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64, momentum: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate,
            momentum,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..1.0).contains(&v);
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::domain("optimizer", "learning rate must be finite and >= 0"));
        }
        if !unit(self.momentum) || !unit(self.beta1) || !unit(self.beta2) {
            return Err(Error::domain("optimizer", "momentum and betas must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::domain("optimizer", "epsilon must be positive"));
        }
        Ok(())
    }
}

/// Per-parameter moment buffers. For SGD `first` is the velocity and `second`
/// is unused.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub first: Vec<Tensor>,
    pub second: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let first: Vec<Tensor> = params.into_iter().map(Tensor::zeros_like).collect();
        Self {
            step: 0,
            second: first.clone(),
            first,
        }
    }
}

/// SGD: `v <- momentum*v - lr*g; theta <- theta + v`.
/// Adam: bias-corrected moments, `theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn optimizer_step(
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
    state: &mut OptimizerState,
    config: &OptimizerConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() || params.len() != state.second.len() {
        return Err(Error::shape("optimizer_step", "parameter, gradient and state counts differ"));
    }
    for ((p, g), (m, v)) in params.iter().zip(grads).zip(state.first.iter().zip(&state.second)) {
        if p.shape() != g.shape() || p.shape() != m.shape() || p.shape() != v.shape() {
            return Err(Error::shape(
                "optimizer_step",
                format!("parameter {:?} vs gradient {:?}", p.shape(), g.shape()),
            ));
        }
    }
    state.step += 1;
    let lr = config.learning_rate;
    match config.kind {
        OptimizerKind::Sgd => {
            for ((p, g), vel) in params.iter_mut().zip(grads).zip(state.first.iter_mut()) {
                for ((theta, grad), v) in p.data_mut().iter_mut().zip(g.data()).zip(vel.data_mut()) {
                    *v = config.momentum * *v - lr * grad;
                    *theta += *v;
                }
            }
        }
        OptimizerKind::Adam => {
            let t = state.step as i32;
            let c1 = 1.0 - config.beta1.powi(t);
            let c2 = 1.0 - config.beta2.powi(t);
            for ((p, g), (m, v)) in params
                .iter_mut()
                .zip(grads)
                .zip(state.first.iter_mut().zip(state.second.iter_mut()))
            {
                for (((theta, grad), mk), vk) in p
                    .data_mut()
                    .iter_mut()
                    .zip(g.data())
                    .zip(m.data_mut())
                    .zip(v.data_mut())
                {
                    *mk = config.beta1 * *mk + (1.0 - config.beta1) * grad;
                    *vk = config.beta2 * *vk + (1.0 - config.beta2) * grad * grad;
                    let m_hat = *mk / c1;
                    let v_hat = *vk / c2;
                    *theta -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
                }
            }
        }
    }
    Ok(())
}
