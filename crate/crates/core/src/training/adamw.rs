use serde::{Deserialize, Serialize};

use crate::autograd::{ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |b: f64| b > 0.0 && b < 1.0;
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !open_unit(self.beta1) || !open_unit(self.beta2) {
            return Err(Error::Config(format!(
                "betas ({}, {}) must lie in (0, 1)",
                self.beta1, self.beta2
            )));
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("eps must be positive and weight decay non-negative".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(n: usize) -> Self {
        Moments {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One AdamW update of `param` in place. `t` is the 1-based step count used
/// for bias correction. Weight decay shrinks the parameter before the
/// adaptive step.
pub fn adamw_step(param: &mut [f64], grad: &[f64], state: &mut Moments, t: u64, cfg: &AdamWConfig) -> Result<()> {
    let n = param.len();
    if grad.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::dim("adamw_step", &[n], &[grad.len(), state.m.len(), state.v.len()]));
    }
    if t == 0 {
        return Err(Error::Usage("adamw steps are counted from 1".into()));
    }
    let correction1 = 1.0 - cfg.beta1.powf(t as f64);
    let correction2 = 1.0 - cfg.beta2.powf(t as f64);
    let decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
    for i in 0..n {
        let g = grad[i];
        param[i] *= decay;
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / correction1;
        let v_hat = state.v[i] / correction2;
        param[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// AdamW over a fixed subset of a [`ParamStore`], reading accumulated
/// gradients from the store.
#[derive(Clone, Debug)]
pub struct AdamW {
    config: AdamWConfig,
    ids: Vec<ParamId>,
    state: Vec<Moments>,
    t: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig, store: &ParamStore, ids: &[ParamId]) -> Result<Self> {
        config.validate()?;
        Ok(AdamW {
            config,
            ids: ids.to_vec(),
            state: ids.iter().map(|&id| Moments::zeros(store.get(id).value.numel())).collect(),
            t: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        self.t += 1;
        for (&id, state) in self.ids.iter().zip(&mut self.state) {
            let p = store.get_mut(id);
            adamw_step(p.value.data_mut(), p.grad.data(), state, self.t, &self.config)?;
        }
        Ok(())
    }
}
