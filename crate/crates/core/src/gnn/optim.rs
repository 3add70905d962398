//! Adam with L2 weight decay folded into the gradient.

use serde::{Deserialize, Serialize};

use super::params::{Grads, Params};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Grads,
    v: Grads,
    step: i32,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &Params) -> Self {
        Adam {
            config,
            m: params.zero_grads(),
            v: params.zero_grads(),
            step: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, params: &mut Params, grads: &Grads) {
        let c = self.config;
        self.step += 1;
        let bias1 = 1.0 - c.beta1.powi(self.step);
        let bias2 = 1.0 - c.beta2.powi(self.step);
        for (ti, t) in params.tensors.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m.0[ti], &mut self.v.0[ti], &grads.0[ti]);
            for k in 0..t.data.len() {
                let grad = g[k] + c.weight_decay * t.data[k];
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * grad;
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * grad * grad;
                if c.learning_rate != 0.0 {
                    let mhat = m[k] / bias1;
                    let vhat = v[k] / bias2;
                    t.data[k] -= c.learning_rate * mhat / (vhat.sqrt() + c.eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Params::default();
        p.add("w", vec![2], vec![1.0, -1.0]);
        let cfg = AdamConfig {
            learning_rate: 0.1,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut adam = Adam::new(cfg, &p);
        adam.step(&mut p, &Grads(vec![vec![3.0, -0.5]]));
        // The bias-corrected first step is lr · g / (|g| + eps).
        assert!((p.tensors[0].data[0] - 0.9).abs() < 1e-8);
        assert!((p.tensors[0].data[1] + 0.9).abs() < 1e-8);
    }

    #[test]
    fn minimises_quadratic() {
        let mut p = Params::default();
        p.add("w", vec![1], vec![5.0]);
        let mut adam = Adam::new(
            AdamConfig {
                learning_rate: 0.05,
                ..Default::default()
            },
            &p,
        );
        for _ in 0..2000 {
            let w = p.tensors[0].data[0];
            adam.step(&mut p, &Grads(vec![vec![2.0 * (w - 1.0)]]));
        }
        assert!((p.tensors[0].data[0] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut p = Params::default();
        p.add("w", vec![3], vec![0.25, -0.0, 7.5]);
        let before = p.clone();
        let mut adam = Adam::new(
            AdamConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            &p,
        );
        for _ in 0..10 {
            adam.step(&mut p, &Grads(vec![vec![1.0, -2.0, 3.0]]));
        }
        assert_eq!(p, before);
    }
}
