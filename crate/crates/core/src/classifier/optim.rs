//! Adam over the head's four parameter arrays.

use serde::{Deserialize, Serialize};

use super::head::{HeadGradients, HeadWeights};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    params: AdamParams,
    step: i32,
    m: [Vec<f64>; 4],
    v: [Vec<f64>; 4],
}

impl Adam {
    pub fn new(head: &HeadWeights, lr: f64, params: AdamParams) -> Self {
        let zeros = || {
            [
                vec![0.0; head.w1.len()],
                vec![0.0; head.b1.len()],
                vec![0.0; head.w2.len()],
                vec![0.0; head.b2.len()],
            ]
        };
        Self { lr, params, step: 0, m: zeros(), v: zeros() }
    }

    pub fn step(&mut self, head: &mut HeadWeights, grads: &HeadGradients) {
        self.step += 1;
        let AdamParams { beta1, beta2, eps } = self.params;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        let lr = self.lr;
        let targets: [(&mut Vec<f64>, &Vec<f64>); 4] = [
            (&mut head.w1, &grads.w1),
            (&mut head.b1, &grads.b1),
            (&mut head.w2, &grads.w2),
            (&mut head.b2, &grads.b2),
        ];
        for ((param, grad), (m, v)) in targets.into_iter().zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for i in 0..param.len() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
