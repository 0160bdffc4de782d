#[cfg(not(feature = "std"))]
use num_traits::Float;
use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::{Module, Param};
use crate::{gemm, Error, Result, Scalar, Tensor};

/// `y = x W^T + b` over `[B, in] -> [B, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(name: &str, inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            weight: Param::uniform(format!("{name}.weight"), &[outputs, inputs], bound, rng),
            bias: Param::zeros(format!("{name}.bias"), &[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        linear(x, &self.weight.value, &self.bias.value)
    }

    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, i, o) = (x.shape()[0], self.inputs(), self.outputs());
        if dy.shape() != [b, o] {
            return Err(Error::ShapeMismatch(format!("linear backward: dy {:?}", dy.shape())));
        }
        gemm::tn(o, b, i, dy.data(), x.data(), self.weight.grad.data_mut(), true);
        for row in dy.data().chunks_exact(o) {
            for (g, &d) in self.bias.grad.data_mut().iter_mut().zip(row) {
                *g = *g + d;
            }
        }
        let mut dx = Tensor::zeros(&[b, i]);
        gemm::nn(b, o, i, dy.data(), self.weight.value.data(), dx.data_mut(), false);
        Ok(dx)
    }
}

impl<T: Scalar> Module<T> for Linear<T> {
    fn params<'a>(&'a self, out: &mut Vec<&'a Param<T>>) {
        out.push(&self.weight);
        out.push(&self.bias);
    }
    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param<T>>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
}

/// Affine map of `x [B, I]` by `weight [O, I]` and `bias [O]`.
pub fn linear<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, i) = match x.shape() {
        [b, i] => (*b, *i),
        s => return Err(Error::ShapeMismatch(format!("linear expects [B, I], got {s:?}"))),
    };
    let (o, wi) = match weight.shape() {
        [o, wi] => (*o, *wi),
        s => return Err(Error::ShapeMismatch(format!("linear weight {s:?}"))),
    };
    if wi != i || bias.shape() != [o] {
        return Err(Error::ShapeMismatch(format!("linear: x {:?}, weight {:?}", x.shape(), weight.shape())));
    }
    let mut y = Tensor::zeros(&[b, o]);
    for row in y.data_mut().chunks_exact_mut(o) {
        row.copy_from_slice(bias.data());
    }
    gemm::nt(b, i, o, x.data(), weight.data(), y.data_mut(), true);
    Ok(y)
}
