//! AdamW with decoupled weight decay and a cosine learning-rate schedule.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{PolicyError, Result};
use crate::model::PolicyModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global-norm gradient clipping threshold.
    pub grad_clip: Option<f64>,
    /// Leave encoder parameters untouched.
    pub freeze_encoder: bool,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            grad_clip: None,
            freeze_encoder: false,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.grad_clip.is_none_or(|c| c > 0.0);
        if ok {
            Ok(())
        } else {
            Err(PolicyError::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// `lr(s) = base · ½(1 + cos(π · s / total))`, held at zero past `total`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineSchedule {
    pub base_lr: f64,
    pub total_steps: usize,
}

impl CosineSchedule {
    pub fn lr(&self, step: usize) -> f64 {
        if self.total_steps == 0 {
            return self.base_lr;
        }
        let frac = (step.min(self.total_steps)) as f64 / self.total_steps as f64;
        self.base_lr * 0.5 * (1.0 + (PI * frac).cos())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    cfg: AdamWConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, num_params: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            steps: 0,
        })
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.cfg
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update at learning rate `lr`. Parameters are rounded to `f32`
    /// afterwards so checkpoints stay bit-exact.
    pub fn step(&mut self, model: &mut PolicyModel, grad: &[f64], lr: f64) -> Result<()> {
        if grad.len() != self.m.len() || grad.len() != model.num_params() {
            return Err(PolicyError::Input(format!(
                "gradient has {} entries, model has {}",
                grad.len(),
                model.num_params()
            )));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            let name = model.layout().locate(i).map(|v| v.name.clone()).unwrap_or_default();
            return Err(PolicyError::Numeric {
                message: format!("gradient entry {i} ({name}) is {}", grad[i]),
            });
        }
        let clip = match self.cfg.grad_clip {
            Some(c) => {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > c { c / norm } else { 1.0 }
            }
            None => 1.0,
        };
        self.steps += 1;
        let t = self.steps as i32;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        let views = model.layout().views().to_vec();
        let params = model.params_mut();
        for view in &views {
            if !view.trainable || (self.cfg.freeze_encoder && view.encoder) {
                continue;
            }
            for i in view.range() {
                let g = grad[i] * clip;
                self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
                self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
                let mhat = self.m[i] / bc1;
                let vhat = self.v[i] / bc2;
                let mut p = params[i];
                if view.decay {
                    p -= lr * self.cfg.weight_decay * p;
                }
                p -= lr * mhat / (vhat.sqrt() + self.cfg.eps);
                params[i] = p as f32 as f64;
            }
        }
        Ok(())
    }
}
