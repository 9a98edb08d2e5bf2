//! Adam and the one-cycle learning-rate schedule.

use ndarray::{ArrayD, Zip};

use crate::autograd::Tensor;
use crate::nn::ParamStore;

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros = || -> Vec<Tensor> {
            store
                .iter()
                .map(|p| ArrayD::zeros(p.value.raw_dim()))
                .collect()
        };
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update. `grads` is in store order.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) {
        assert_eq!(grads.len(), store.len(), "one gradient per parameter");
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
        for (((p, g), m), v) in store
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            Zip::from(&mut p.value)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let mhat = *m / c1;
                    let vhat = *v / c2;
                    *p -= lr * mhat / (vhat.sqrt() + eps);
                });
        }
    }
}

/// Linear warm-up from `peak/div` to `peak` over the first `warmup_frac` of the
/// steps, then cosine annealing down to `peak/div`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OneCycle {
    pub peak: f64,
    pub total_steps: usize,
    pub warmup_frac: f64,
    pub div: f64,
}

impl OneCycle {
    pub fn new(peak: f64, total_steps: usize) -> Self {
        Self {
            peak,
            total_steps,
            warmup_frac: 0.3,
            div: 25.0,
        }
    }

    pub fn lr(&self, step: usize) -> f64 {
        let low = self.peak / self.div;
        if self.total_steps <= 1 {
            return self.peak;
        }
        let last = (self.total_steps - 1) as f64;
        let warm = (self.warmup_frac * last).max(1.0);
        let s = step as f64;
        if s <= warm {
            low + (self.peak - low) * s / warm
        } else {
            let frac = ((s - warm) / (last - warm).max(1.0)).min(1.0);
            low + (self.peak - low) * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
        }
    }
}
