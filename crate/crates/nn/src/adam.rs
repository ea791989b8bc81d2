use serde::{Deserialize, Serialize};

use crate::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are laid out in the store's
/// name order and created lazily on the first step.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients currently held by `store`.
    pub fn step(&mut self, store: &mut ParamStore) {
        if self.m.is_empty() {
            self.m = store.iter().map(|(_, p)| vec![0.0; p.values.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), store.len(), "optimizer bound to a different store");
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((_, p), m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for k in 0..p.values.len() {
                let g = p.grads[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                p.values[k] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// One Adam update with fresh state on `store`'s current gradients.
pub fn adam_step(store: &mut ParamStore, opt: &mut Adam) {
    opt.step(store);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(w: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", vec![1], vec![w]).unwrap();
        s
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut s = one(0.7);
        let mut opt = Adam::new(AdamConfig::default());
        for _ in 0..3 {
            opt.step(&mut s);
        }
        assert_eq!(s.get("w").unwrap().values, vec![0.7]);
        assert_eq!(opt.steps(), 3);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [3.0, -0.02, 1e4] {
            let mut s = one(1.0);
            s.get_mut("w").unwrap().grads = vec![g];
            let mut opt = Adam::new(AdamConfig { lr: 0.01, ..Default::default() });
            opt.step(&mut s);
            let moved = 1.0 - s.get("w").unwrap().values[0];
            assert!((moved.abs() - 0.01).abs() < 1e-8, "{moved}");
            assert_eq!(moved.signum(), g.signum());
        }
    }

    #[test]
    fn quadratic_bowl() {
        let mut s = one(1.0);
        let mut opt = Adam::new(AdamConfig { lr: 0.1, ..Default::default() });
        for _ in 0..200 {
            let w = s.get("w").unwrap().values[0];
            s.get_mut("w").unwrap().grads = vec![2.0 * w];
            opt.step(&mut s);
        }
        assert!(s.get("w").unwrap().values[0].abs() < 0.1);
    }
}
