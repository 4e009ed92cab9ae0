//! Adam with decoupled weight decay and a linear warmup/decay schedule.

use std::collections::HashMap;

use crate::params::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Applied decoupled from the gradient, and only to parameters whose
    /// store entry opted in (weight matrices; never biases or norm params).
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, store: &ParamStore) -> Self {
        let m = store.ids().map(|id| vec![0.0; store.value(id).len()]).collect();
        let v = store.ids().map(|id| vec![0.0; store.value(id).len()]).collect();
        Adam { cfg, m, v, t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update with the learning rate scaled by `lr_scale` (schedule
    /// multiplier). Parameters absent from `grads` are treated as having
    /// zero gradient, so moments still decay and weight decay still applies.
    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &HashMap<ParamId, Vec<f64>>,
        lr_scale: f64,
    ) {
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let lr = self.cfg.lr * lr_scale;
        let ids: Vec<ParamId> = store.ids().collect();
        for pid in ids {
            let n = store.value(pid).len();
            let zero;
            let g = match grads.get(&pid) {
                Some(g) => g.as_slice(),
                None => {
                    zero = vec![0.0; n];
                    zero.as_slice()
                }
            };
            let decay = if store.decays(pid) {
                self.cfg.weight_decay
            } else {
                0.0
            };
            let m = &mut self.m[pid.0];
            let v = &mut self.v[pid.0];
            let p = &mut store.value_mut(pid).data;
            for i in 0..n {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * (mhat / (vhat.sqrt() + self.cfg.eps) + decay * p[i]);
            }
        }
    }
}

/// Linear warmup over the first `warmup_fraction` of `total` steps, then
/// linear decay to zero. `step` is 0-based; the multiplier is never zero
/// during warmup so the first update is not wasted.
pub fn schedule_multiplier(step: u64, total: u64, warmup_fraction: f64) -> f64 {
    assert!(total > 0, "schedule: zero total steps");
    let warmup = (total as f64 * warmup_fraction).floor() as u64;
    if step < warmup {
        (step + 1) as f64 / warmup as f64
    } else if total > warmup {
        (total - step) as f64 / (total - warmup) as f64
    } else {
        1.0
    }
    .max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::matrix(1, 2, vec![1.0, -2.0]), false);
        let mut opt = Adam::new(AdamConfig::new(0.1, 0.0), &store);
        let mut grads = HashMap::new();
        grads.insert(id, vec![3.0, -0.5]);
        opt.step(&mut store, &grads, 1.0);
        let w = &store.value(id).data;
        assert!((w[0] - (1.0 - 0.1)).abs() < 1e-6);
        assert!((w[1] - (-2.0 + 0.1)).abs() < 1e-6);
    }

    #[test]
    fn decay_only_touches_opted_in_params() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::matrix(1, 1, vec![1.0]), true);
        let b = store.add("b", Tensor::matrix(1, 1, vec![1.0]), false);
        let mut opt = Adam::new(AdamConfig::new(0.1, 0.5), &store);
        opt.step(&mut store, &HashMap::new(), 1.0);
        assert!(store.value(w).data[0] < 1.0);
        assert_eq!(store.value(b).data[0], 1.0);
    }

    #[test]
    fn quadratic_converges() {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::matrix(1, 1, vec![5.0]), false);
        let mut opt = Adam::new(AdamConfig::new(0.05, 0.0), &store);
        for _ in 0..2000 {
            let x = store.value(id).data[0];
            let mut grads = HashMap::new();
            grads.insert(id, vec![2.0 * x]);
            opt.step(&mut store, &grads, 1.0);
        }
        assert!(store.value(id).data[0].abs() < 1e-3);
    }

    #[test]
    fn schedule_shape() {
        let total = 100;
        let f = 0.1;
        assert!((schedule_multiplier(0, total, f) - 0.1).abs() < 1e-12);
        assert!((schedule_multiplier(9, total, f) - 1.0).abs() < 1e-12);
        assert!((schedule_multiplier(10, total, f) - 1.0).abs() < 1e-12);
        assert!((schedule_multiplier(99, total, f) - 1.0 / 90.0).abs() < 1e-12);
        // no warmup
        assert!((schedule_multiplier(0, 10, 0.0) - 1.0).abs() < 1e-12);
    }
}
