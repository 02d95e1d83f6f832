//! Adaptive moment estimation with separate rates for the hash tables and
//! the MLP.

use crate::field::FieldParams;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr_grid: f64,
    pub lr_mlp: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr_grid: 1e-2,
            lr_mlp: 1e-3,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub m: FieldParams<T>,
    pub v: FieldParams<T>,
    pub step: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &FieldParams<T>) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    /// One bias-corrected update of every parameter group.
    pub fn update(&mut self, cfg: &AdamConfig, params: &mut FieldParams<T>, grads: &FieldParams<T>) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::c(cfg.beta1), T::c(cfg.beta2));
        let c1 = T::c(1.0 - cfg.beta1.powi(t));
        let c2 = T::c(1.0 - cfg.beta2.powi(t));
        let eps = T::c(cfg.eps);
        let groups = params
            .groups_mut()
            .into_iter()
            .zip(grads.groups())
            .zip(self.m.groups_mut())
            .zip(self.v.groups_mut());
        for ((((name, p), (_, g)), (_, m)), (_, v)) in groups {
            let lr = T::c(if name == "grid" { cfg.lr_grid } else { cfg.lr_mlp });
            let one = T::one();
            for (((p, g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                if *g == T::zero() && *m == T::zero() && *v == T::zero() {
                    // moments stay zero, update is exactly zero
                    continue;
                }
                *m = b1 * *m + (one - b1) * *g;
                *v = b2 * *v + (one - b2) * *g * *g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}
