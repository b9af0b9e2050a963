use serde::{Deserialize, Serialize};

use super::TunerError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates of one Adam run.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(dim: usize, config: AdamConfig) -> Self {
        Self { m: vec![0.0; dim], v: vec![0.0; dim], step: 0, config }
    }

    /// Bias-corrected Adam update of `params` in place.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<(), TunerError> {
        self.apply(params, grad, |_| lr)
    }

    /// Same as [`AdamState::update`] with a step size per entry.
    pub fn update_with_rates(&mut self, params: &mut [f64], grad: &[f64], rates: &[f64]) -> Result<(), TunerError> {
        if rates.len() != self.m.len() {
            return Err(TunerError::Shape { expected: self.m.len(), got: rates.len() });
        }
        self.apply(params, grad, |i| rates[i])
    }

    fn apply(&mut self, params: &mut [f64], grad: &[f64], lr: impl Fn(usize) -> f64) -> Result<(), TunerError> {
        if params.len() != self.m.len() {
            return Err(TunerError::Shape { expected: self.m.len(), got: params.len() });
        }
        if grad.len() != self.m.len() {
            return Err(TunerError::Shape { expected: self.m.len(), got: grad.len() });
        }
        let bad: Vec<usize> = grad.iter().enumerate().filter(|(_, g)| !g.is_finite()).map(|(i, _)| i).collect();
        if !bad.is_empty() {
            return Err(TunerError::NonFiniteGradient(bad));
        }
        let AdamConfig { beta1, beta2, eps } = self.config;
        self.step += 1;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr(i) * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::update`].
pub fn adam_step(state: &AdamState, params: &[f64], grad: &[f64], lr: f64) -> Result<(Vec<f64>, AdamState), TunerError> {
    let mut next = state.clone();
    let mut p = params.to_vec();
    next.update(&mut p, grad, lr)?;
    Ok((p, next))
}
