use crate::{Scalar, Tensor};

pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Selu,
    LeakyRelu(f64),
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn eval<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Selu => {
                let l = T::from_f64(SELU_LAMBDA);
                if x > T::zero() {
                    l * x
                } else {
                    l * T::from_f64(SELU_ALPHA) * x.exp_m1()
                }
            }
            Activation::LeakyRelu(slope) => {
                if x > T::zero() {
                    x
                } else {
                    T::from_f64(slope) * x
                }
            }
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation's *output*; each of the
    /// three is monotone so the output determines the input's branch.
    #[inline]
    pub fn grad_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Selu => {
                let l = T::from_f64(SELU_LAMBDA);
                if y > T::zero() {
                    l
                } else {
                    y + l * T::from_f64(SELU_ALPHA)
                }
            }
            Activation::LeakyRelu(slope) => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::from_f64(slope)
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
        }
    }

    pub fn forward<T: Scalar>(self, x: &Tensor<T>) -> Tensor<T> {
        x.map(|v| self.eval(v))
    }

    pub fn forward_inplace<T: Scalar>(self, x: &mut Tensor<T>) {
        x.data_mut().iter_mut().for_each(|v| *v = self.eval(*v));
    }

    /// `dx = dy * f'(x)` given the forward output `y`, in place on `dy`.
    pub fn backward_inplace<T: Scalar>(self, y: &Tensor<T>, dy: &mut Tensor<T>) {
        for (d, &o) in dy.data_mut().iter_mut().zip(y.data()) {
            *d = *d * self.grad_from_output(o);
        }
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
