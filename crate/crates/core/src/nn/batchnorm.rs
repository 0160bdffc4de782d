use alloc::format;
use alloc::vec::Vec;

use super::{Mode, Module, Param};
use crate::{Error, Result, Scalar, Tensor};

/// Per-channel normalisation over `(B, H, W)` with affine `gamma`, `beta`.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm2d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    pub momentum: f64,
}

/// What backward needs from a forward pass.
#[derive(Clone, Debug)]
pub struct BnCache<T: Scalar> {
    mode: Mode,
    xhat: Tensor<T>,
    inv_std: Vec<T::Acc>,
}

/// Batch statistics of one train-mode pass (variance unbiased).
#[derive(Clone, Debug, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        let mut running_var = Tensor::zeros(&[channels]);
        running_var.fill(T::one());
        let mut gamma = Param::zeros(format!("{name}.gamma"), &[channels]);
        gamma.value.fill(T::one());
        Self {
            gamma,
            beta: Param::zeros(format!("{name}.beta"), &[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var,
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    /// Normalises `x`. `record` keeps the backward cache. Train mode also
    /// returns the batch statistics; apply them with [`Self::update_running`].
    pub fn forward(
        &self,
        x: &Tensor<T>,
        mode: Mode,
        record: bool,
    ) -> Result<(Tensor<T>, Option<BnCache<T>>, Option<BnStats>)> {
        let (b, c, h, w) = x.dims4()?;
        if c != self.channels() {
            return Err(Error::ShapeMismatch(format!("batchnorm over {c} channels, expected {}", self.channels())));
        }
        let hw = h * w;
        let count = b * hw;
        if mode == Mode::Train && count < 2 {
            return Err(Error::DegenerateBatch);
        }
        let mut y = Tensor::zeros(x.shape());
        let mut xhat = if record { Tensor::zeros(x.shape()) } else { Tensor::zeros(&[0]) };
        let mut inv_std = Vec::with_capacity(c);
        let mut stats = BnStats { mean: Vec::new(), var: Vec::new() };
        let plane = |bi: usize, ch: usize| &x.data()[(bi * c + ch) * hw..][..hw];
        let total = <T::Acc as Scalar>::from_f64(count as f64);
        let eps = <T::Acc as Scalar>::from_f64(self.eps);
        for ch in 0..c {
            let (mean, var) = match mode {
                Mode::Train => {
                    let mut sum = <T::Acc as num_traits::Zero>::zero();
                    for bi in 0..b {
                        sum = plane(bi, ch).iter().fold(sum, |a, v| a + v.widen());
                    }
                    let mean = sum / total;
                    let mut sq = <T::Acc as num_traits::Zero>::zero();
                    for bi in 0..b {
                        sq = plane(bi, ch).iter().fold(sq, |a, v| {
                            let d = v.widen() - mean;
                            a + d * d
                        });
                    }
                    stats.mean.push(mean.as_f64());
                    stats.var.push(sq.as_f64() / (count - 1) as f64);
                    (mean, sq / total)
                }
                Mode::Eval => (self.running_mean.data()[ch].widen(), self.running_var.data()[ch].widen()),
            };
            let istd = num_traits::Float::recip(num_traits::Float::sqrt(var + eps));
            inv_std.push(istd);
            let g = self.gamma.value.data()[ch].widen();
            let be = self.beta.value.data()[ch].widen();
            for bi in 0..b {
                let off = (bi * c + ch) * hw;
                for i in off..off + hw {
                    let xh = (x.data()[i].widen() - mean) * istd;
                    y.data_mut()[i] = T::narrow(g * xh + be);
                    if record {
                        xhat.data_mut()[i] = T::narrow(xh);
                    }
                }
            }
        }
        let cache = record.then(|| BnCache { mode, xhat, inv_std });
        Ok((y, cache, (mode == Mode::Train).then_some(stats)))
    }

    /// `running <- (1 - momentum) * running + momentum * batch`.
    pub fn update_running(&mut self, stats: &BnStats) {
        let m = self.momentum;
        for (r, &s) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
            *r = T::from_f64((1.0 - m) * r.as_f64() + m * s);
        }
        for (r, &s) in self.running_var.data_mut().iter_mut().zip(&stats.var) {
            *r = T::from_f64(((1.0 - m) * r.as_f64() + m * s).max(0.0));
        }
    }

    pub fn backward(&mut self, cache: &BnCache<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, c, h, w) = dy.dims4()?;
        if cache.xhat.shape() != dy.shape() {
            return Err(Error::ShapeMismatch(format!("batchnorm backward: dy {:?}", dy.shape())));
        }
        let hw = h * w;
        let n = <T::Acc as Scalar>::from_f64((b * hw) as f64);
        let mut dx = Tensor::zeros(dy.shape());
        for ch in 0..c {
            let mut sum_dy = <T::Acc as num_traits::Zero>::zero();
            let mut sum_dy_xhat = <T::Acc as num_traits::Zero>::zero();
            for bi in 0..b {
                let off = (bi * c + ch) * hw;
                for i in off..off + hw {
                    let d = dy.data()[i].widen();
                    sum_dy = sum_dy + d;
                    sum_dy_xhat = sum_dy_xhat + d * cache.xhat.data()[i].widen();
                }
            }
            let g = self.gamma.value.data()[ch].widen();
            let gg = &mut self.gamma.grad.data_mut()[ch];
            *gg = *gg + T::narrow(sum_dy_xhat);
            let bg = &mut self.beta.grad.data_mut()[ch];
            *bg = *bg + T::narrow(sum_dy);
            let istd = cache.inv_std[ch];
            for bi in 0..b {
                let off = (bi * c + ch) * hw;
                for i in off..off + hw {
                    let d = dy.data()[i].widen();
                    let v = match cache.mode {
                        Mode::Eval => g * istd * d,
                        Mode::Train => g * istd / n * (n * d - sum_dy - cache.xhat.data()[i].widen() * sum_dy_xhat),
                    };
                    dx.data_mut()[i] = T::narrow(v);
                }
            }
        }
        Ok(dx)
    }
}

impl<T: Scalar> Module<T> for BatchNorm2d<T> {
    fn params<'a>(&'a self, out: &mut Vec<&'a Param<T>>) {
        out.push(&self.gamma);
        out.push(&self.beta);
    }
    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param<T>>) {
        out.push(&mut self.gamma);
        out.push(&mut self.beta);
    }
}
