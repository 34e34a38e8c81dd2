//! AdamW: Adam moment estimates with decoupled weight decay.
//!
//! Decay applies to weight matrices only; biases and the log-temperature are
//! exempt. State update order is fixed, so training is bit-reproducible.

use crate::encoder::ModelParams;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

pub struct AdamW {
    config: AdamWConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    decay_mask: Vec<bool>,
    t: u64,
}

impl AdamW {
    pub fn new(params: &ModelParams, config: AdamWConfig) -> AdamW {
        let m = (0..params.len())
            .map(|s| Tensor::zeros(params.tensor(s).shape()))
            .collect();
        let v = (0..params.len())
            .map(|s| Tensor::zeros(params.tensor(s).shape()))
            .collect();
        let decay_mask = params
            .names()
            .iter()
            .map(|n| !n.ends_with(".b") && n != "logit.log_tau")
            .collect();
        AdamW {
            config,
            m,
            v,
            decay_mask,
            t: 0,
        }
    }

    /// One update with the given learning rate; `grads` is one tensor per
    /// parameter slot.
    pub fn step(&mut self, params: &mut ModelParams, grads: &[Tensor], lr: f64) {
        self.t += 1;
        let c = self.config;
        let bias1 = 1.0 - c.beta1.powi(self.t as i32);
        let bias2 = 1.0 - c.beta2.powi(self.t as i32);
        for slot in 0..params.len() {
            let g = grads[slot].data();
            let m = self.m[slot].data_mut();
            let v = self.v[slot].data_mut();
            let p = params.tensor_mut(slot).data_mut();
            let decay = self.decay_mask[slot];
            for i in 0..p.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + c.eps);
                if decay {
                    p[i] -= lr * c.weight_decay * p[i];
                }
            }
        }
        params.clamp_temperature();
    }
}
