use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::Param;
use crate::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coupled L2: added to the gradient as `weight_decay * theta`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-4 }
    }
}

/// Adam with bias-corrected moments. Moments are created lazily on the
/// first step and matched to parameters by position, so the same parameter
/// order must be passed every time.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step_count: u64,
    pub first_moment: Vec<Tensor<T>>,
    pub second_moment: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step_count: 0, first_moment: Vec::new(), second_moment: Vec::new() }
    }

    pub fn step(&mut self, params: &mut [&mut Param<T>]) {
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| Tensor::zeros_like(&p.value)).collect();
            self.second_moment = self.first_moment.clone();
        }
        assert_eq!(self.first_moment.len(), params.len(), "parameter list changed between steps");
        self.step_count += 1;
        let c = self.config;
        let t = self.step_count as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first_moment).zip(&mut self.second_moment) {
            if !p.trainable {
                continue;
            }
            let (value, grad) = (p.value.data_mut(), p.grad.data());
            for (((w, &g), m), v) in value.iter_mut().zip(grad).zip(m.data_mut()).zip(v.data_mut()) {
                let theta = w.as_f64();
                let g = g.as_f64() + c.weight_decay * theta;
                let mt = c.beta1 * m.as_f64() + (1.0 - c.beta1) * g;
                let vt = c.beta2 * v.as_f64() + (1.0 - c.beta2) * g * g;
                *m = T::from_f64(mt);
                *v = T::from_f64(vt);
                let update = c.lr * (mt / bias1) / ((vt / bias2).sqrt() + c.eps);
                *w = T::from_f64(theta - update);
            }
        }
    }
}
