use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Multiplier applied to the learning rate after each epoch.
    pub decay_per_epoch: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay_per_epoch: 0.95,
        }
    }
}

/// Adam with bias correction. A step whose gradients contain a non-finite
/// value is skipped and counted.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub lr: f64,
    pub step: u64,
    pub skipped: u64,
    m: BTreeMap<String, Array2<f64>>,
    v: BTreeMap<String, Array2<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            lr: cfg.lr,
            step: 0,
            skipped: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn end_epoch(&mut self) {
        self.lr *= self.cfg.decay_per_epoch;
    }

    /// Returns false when the step was skipped.
    pub fn step(&mut self, ps: &mut ParamStore, grads: &BTreeMap<String, Array2<f64>>) -> bool {
        if grads.values().any(|g| g.iter().any(|v| !v.is_finite())) {
            self.skipped += 1;
            return false;
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (name, g) in grads {
            let Some(p) = ps.params.get_mut(name) else { continue };
            let m = self.m.entry(name.clone()).or_insert_with(|| Array2::zeros(g.dim()));
            let v = self.v.entry(name.clone()).or_insert_with(|| Array2::zeros(g.dim()));
            ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.cfg.eps);
            });
        }
        true
    }
}
