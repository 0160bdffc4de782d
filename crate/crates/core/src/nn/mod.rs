//! Dense-tensor layers with hand-written backward passes.
//!
//! Layers are plain structs holding [`Param`]s. A forward call returns the
//! output together with whatever the matching backward call needs; the
//! caller decides whether to keep it. Backward calls accumulate into
//! `Param::grad` and never zero it.

pub mod activation;
pub mod adam;
pub mod batchnorm;
pub mod conv;
pub mod gru;
pub mod linear;
pub mod loss;
pub mod pool;

use alloc::string::String;

use rand::Rng;

use crate::{Scalar, Tensor};

pub use activation::Activation;
pub use adam::{Adam, AdamConfig};
pub use batchnorm::{BatchNorm2d, BnCache, BnStats};
pub use conv::Conv2d;
pub use gru::{BiGru, GruCache};
pub use linear::Linear;
pub use loss::bce_loss;
pub use pool::{maxpool2d, maxpool2d_backward, PoolIndex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub trainable: bool,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros_like(&value);
        Self { name: name.into(), value, grad, trainable: true }
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self::new(name, Tensor::zeros(shape))
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform(name: impl Into<String>, shape: &[usize], bound: f64, rng: &mut impl Rng) -> Self {
        let mut value = Tensor::zeros(shape);
        for v in value.data_mut() {
            *v = T::from_f64(rng.random_range(-bound..=bound));
        }
        Self::new(name, value)
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }
}

/// Anything that owns parameters, visited in a fixed order.
pub trait Module<T: Scalar> {
    fn params<'a>(&'a self, out: &mut alloc::vec::Vec<&'a Param<T>>);
    fn params_mut<'a>(&'a mut self, out: &mut alloc::vec::Vec<&'a mut Param<T>>);

    fn params_vec(&self) -> alloc::vec::Vec<&Param<T>> {
        let mut out = alloc::vec::Vec::new();
        self.params(&mut out);
        out
    }
}
