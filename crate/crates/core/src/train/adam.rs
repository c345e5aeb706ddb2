//! Adam with global-norm gradient clipping.

use crate::autodiff::Tensor;
use crate::gnn::ModelParams;

pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, params: &ModelParams) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(&t.shape))
                .collect(),
            v: params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(&t.shape))
                .collect(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &[Tensor]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let g = &grads[i];
            for k in 0..p.data.len() {
                let m = &mut self.m[i].data[k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g.data[k];
                let v = &mut self.v[i].data[k];
                *v = self.beta2 * *v + (1.0 - self.beta2) * g.data[k] * g.data[k];
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                p.data[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Scales all gradients in place so their joint L2 norm does not exceed
/// `clip`; returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Tensor], clip: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > clip && norm > 0.0 {
        let s = clip / norm;
        for g in grads.iter_mut() {
            for x in &mut g.data {
                *x *= s;
            }
        }
    }
    norm
}
