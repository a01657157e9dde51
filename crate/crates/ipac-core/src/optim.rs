//! Adam with decoupled weight decay, and the linear warmup/decay schedule.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::encoder::ParamStore;
use crate::math;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Linear warmup to the base rate over `warmup_steps`, then linear decay to
/// zero at `total_steps`. Steps are 1-indexed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSchedule {
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl LinearSchedule {
    pub fn from_ratio(base_lr: f64, warmup_ratio: f64, total_steps: u64) -> Self {
        let warmup_steps = math::round(warmup_ratio * total_steps as f64) as u64;
        Self {
            base_lr,
            warmup_steps,
            total_steps,
        }
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        if self.total_steps == 0 {
            return 0.0;
        }
        if step >= self.total_steps {
            return 0.0;
        }
        if self.warmup_steps > 0 && step <= self.warmup_steps {
            return self.base_lr * step as f64 / self.warmup_steps as f64;
        }
        let remaining = (self.total_steps - step) as f64;
        let span = (self.total_steps - self.warmup_steps) as f64;
        self.base_lr * remaining / span
    }
}

/// First/second moment buffers for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Adam with bias correction and decoupled weight decay applied to every
/// trainable parameter: `θ ← θ - lr·(m̂/(√v̂+ε) + wd·θ)`. A parameter with
/// zero gradient therefore still shrinks by the factor `1 - lr·wd`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step_count: u64,
    moments: BTreeMap<String, Moments>,
}

impl AdamW {
    pub fn new(weight_decay: f64) -> Self {
        Self {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            weight_decay,
            step_count: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn moments(&self) -> &BTreeMap<String, Moments> {
        &self.moments
    }

    /// Rebuild optimizer state from serialized moments.
    pub fn restore(
        weight_decay: f64,
        step_count: u64,
        moments: BTreeMap<String, Moments>,
    ) -> Self {
        Self {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            weight_decay,
            step_count,
            moments,
        }
    }

    /// Apply one update to every trainable parameter. `grads` is aligned with
    /// `params.entries()`; a missing gradient is treated as zero.
    pub fn step(&mut self, lr: f64, params: &mut ParamStore, grads: &[Option<&[f64]>]) {
        self.step_count += 1;
        let t = self.step_count;
        let bias1 = 1.0 - math::powi(self.beta1, t as i32);
        let bias2 = 1.0 - math::powi(self.beta2, t as i32);
        for (idx, entry) in params.entries_mut().iter_mut().enumerate() {
            if !entry.trainable {
                continue;
            }
            let n = entry.tensor.len();
            let state = self
                .moments
                .entry(entry.name.clone())
                .or_insert_with(|| Moments {
                    m: alloc::vec![0.0; n],
                    v: alloc::vec![0.0; n],
                });
            let grad = grads.get(idx).copied().flatten();
            let data = entry.tensor.data_mut();
            for i in 0..n {
                let g = grad.map_or(0.0, |g| g[i]);
                state.m[i] = self.beta1 * state.m[i] + (1.0 - self.beta1) * g;
                state.v[i] = self.beta2 * state.v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = state.m[i] / bias1;
                let v_hat = state.v[i] / bias2;
                data[i] -= lr * (m_hat / (math::sqrt(v_hat) + self.eps)
                    + self.weight_decay * data[i]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use alloc::vec;

    fn one_param_store(value: f64) -> ParamStore {
        let mut store = ParamStore::default();
        store.push("w", Tensor::scalar(value), true);
        store
    }

    #[test]
    fn warmup_is_linear() {
        let sched = LinearSchedule::from_ratio(2.0, 0.1, 1000);
        assert_eq!(sched.warmup_steps, 100);
        assert!((sched.lr_at(50) - 1.0).abs() < 1e-15); // half of base
        assert!((sched.lr_at(100) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn decay_reaches_zero() {
        let sched = LinearSchedule::from_ratio(1.0, 0.1, 1000);
        assert_eq!(sched.lr_at(1000), 0.0);
        assert_eq!(sched.lr_at(2000), 0.0);
        assert!((sched.lr_at(550) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_warmup_starts_at_peak_scale() {
        let sched = LinearSchedule::from_ratio(1.0, 0.0, 100);
        assert!((sched.lr_at(1) - 0.99).abs() < 1e-12);
    }

    #[test]
    fn first_step_matches_hand_derivation() {
        // Quadratic loss f(w) = w^2 at w = 1: g = 2.
        let mut store = one_param_store(1.0);
        let mut opt = AdamW::new(0.01);
        let lr = 0.1;
        let g = 2.0;
        let grads = vec![g];
        opt.step(lr, &mut store, &[Some(grads.as_slice())]);

        let m = (1.0 - ADAM_BETA1) * g;
        let v = (1.0 - ADAM_BETA2) * g * g;
        let m_hat = m / (1.0 - ADAM_BETA1);
        let v_hat = v / (1.0 - ADAM_BETA2);
        let expected = 1.0 - lr * (m_hat / (v_hat.sqrt() + ADAM_EPS) + 0.01 * 1.0);
        let got = store.entries()[0].tensor.data()[0];
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn zero_gradient_still_decays() {
        let mut store = one_param_store(2.0);
        let mut opt = AdamW::new(0.01);
        let lr = 0.5;
        opt.step(lr, &mut store, &[None]);
        let got = store.entries()[0].tensor.data()[0];
        let expected = 2.0 * (1.0 - lr * 0.01);
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn frozen_params_never_move() {
        let mut store = ParamStore::default();
        store.push("frozen", Tensor::scalar(3.0), false);
        let mut opt = AdamW::new(0.5);
        let grads = vec![10.0];
        opt.step(1.0, &mut store, &[Some(grads.as_slice())]);
        assert_eq!(store.entries()[0].tensor.data()[0], 3.0);
    }

    #[test]
    fn restore_reproduces_continuation() {
        let run = |split: bool| {
            let mut store = one_param_store(1.0);
            let mut opt = AdamW::new(0.01);
            for step in 0..10u64 {
                if split && step == 5 {
                    let moments = opt.moments().clone();
                    opt = AdamW::restore(0.01, opt.step_count, moments);
                }
                let g = 0.3 * (step as f64 + 1.0);
                let grads = vec![g];
                opt.step(0.05, &mut store, &[Some(grads.as_slice())]);
            }
            store.entries()[0].tensor.data()[0].to_bits()
        };
        assert_eq!(run(false), run(true));
    }
}
