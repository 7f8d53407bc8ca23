use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::param::Module;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Adam with decoupled weight decay. Moment buffers are keyed by parameter
/// visit order; the same module must be passed to every `step`.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update to every trainable parameter. Frozen parameters
    /// are never written. Fails without touching anything if a trainable
    /// gradient is non-finite.
    pub fn step<M: Module + ?Sized>(&mut self, module: &mut M) -> Result<()> {
        let mut bad = None;
        module.visit(&mut |p| {
            if bad.is_none() && p.trainable && p.grad.iter().any(|g| !g.is_finite()) {
                bad = Some(p.name().to_string());
            }
        });
        if let Some(name) = bad {
            return Err(NnError::NonFiniteGradient(name));
        }
        self.step += 1;
        let AdamWConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let (ms, vs) = (&mut self.m, &mut self.v);
        let mut idx = 0;
        module.visit_mut(&mut |p| {
            if ms.len() <= idx {
                ms.push(vec![0.0; p.len()]);
                vs.push(vec![0.0; p.len()]);
            }
            let (m, v) = (&mut ms[idx], &mut vs[idx]);
            idx += 1;
            if !p.trainable {
                return;
            }
            for (((w, &g), m), v) in p.value.iter_mut().zip(&p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *w -= lr * weight_decay * *w;
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        });
        Ok(())
    }
}

/// Rescales trainable gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<M: Module + ?Sized>(module: &mut M, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    module.visit(&mut |p| {
        if p.trainable {
            sq += p.grad.iter().map(|g| g * g).sum::<f64>();
        }
    });
    let norm = sq.sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        module.visit_mut(&mut |p| {
            if p.trainable {
                p.grad.iter_mut().for_each(|g| *g *= s);
            }
        });
    }
    norm
}
