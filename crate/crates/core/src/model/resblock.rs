use alloc::vec::Vec;

use rand::Rng;

use crate::nn::{Activation, BatchNorm2d, BnCache, BnStats, Conv2d, Mode, Module, Param};
use crate::{Result, Scalar, Tensor};

/// Two 3x3 convolutions with batch norm + LeakyReLU, plus a skip path that
/// gets a 1x1 convolution only when the channel count changes. The first
/// block of the network skips the leading BN + activation.
#[derive(Clone, Debug, PartialEq)]
pub struct ResBlock<T> {
    pub bn1: Option<BatchNorm2d<T>>,
    pub conv1: Conv2d<T>,
    pub bn2: BatchNorm2d<T>,
    pub conv2: Conv2d<T>,
    pub identity: Option<Conv2d<T>>,
    act: Activation,
}

#[derive(Clone, Debug)]
pub struct ResCache<T: Scalar> {
    x: Tensor<T>,
    bn1: Option<BnCache<T>>,
    /// LeakyReLU(bn1(x)); conv1 reads `x` directly when absent.
    a1: Option<Tensor<T>>,
    bn2: BnCache<T>,
    a2: Tensor<T>,
}

impl<T: Scalar> ResBlock<T> {
    pub fn new(name: &str, cin: usize, cout: usize, first: bool, slope: f64, rng: &mut impl Rng) -> Self {
        let bn1 = (!first).then(|| BatchNorm2d::new(&alloc::format!("{name}.bn1"), cin));
        let conv1 = Conv2d::new(&alloc::format!("{name}.conv1"), cin, cout, 3, rng);
        let bn2_name = if first { alloc::format!("{name}.bn") } else { alloc::format!("{name}.bn2") };
        let bn2 = BatchNorm2d::new(&bn2_name, cout);
        let conv2 = Conv2d::new(&alloc::format!("{name}.conv2"), cout, cout, 3, rng);
        let identity = (cin != cout).then(|| Conv2d::new(&alloc::format!("{name}.identity_conv"), cin, cout, 1, rng));
        Self { bn1, conv1, bn2, conv2, identity, act: Activation::LeakyRelu(slope) }
    }

    pub fn batch_norms_mut(&mut self) -> impl Iterator<Item = &mut BatchNorm2d<T>> {
        self.bn1.as_mut().into_iter().chain(core::iter::once(&mut self.bn2))
    }

    pub fn batch_norms(&self) -> impl Iterator<Item = &BatchNorm2d<T>> {
        self.bn1.as_ref().into_iter().chain(core::iter::once(&self.bn2))
    }

    /// Returns output, optional cache and the train-mode batch statistics in
    /// `batch_norms()` order.
    pub fn forward(
        &self,
        x: &Tensor<T>,
        mode: Mode,
        record: bool,
    ) -> Result<(Tensor<T>, Option<ResCache<T>>, Vec<BnStats>)> {
        let mut stats = Vec::new();
        let (bn1_cache, a1) = match &self.bn1 {
            Some(bn) => {
                let (mut t, c, s) = bn.forward(x, mode, record)?;
                stats.extend(s);
                self.act.forward_inplace(&mut t);
                (c, Some(t))
            }
            None => (None, None),
        };
        let c1 = self.conv1.forward(a1.as_ref().unwrap_or(x))?;
        let (mut a2, bn2_cache, s) = self.bn2.forward(&c1, mode, record)?;
        drop(c1);
        stats.extend(s);
        self.act.forward_inplace(&mut a2);
        let mut out = self.conv2.forward(&a2)?;
        match &self.identity {
            Some(conv) => out.add_assign(&conv.forward(x)?)?,
            None => out.add_assign(x)?,
        }
        let cache = if record {
            Some(ResCache { x: x.clone(), bn1: bn1_cache, a1, bn2: bn2_cache.expect("recorded"), a2 })
        } else {
            None
        };
        Ok((out, cache, stats))
    }

    pub fn backward(&mut self, cache: &ResCache<T>, dout: &Tensor<T>) -> Result<Tensor<T>> {
        let mut da2 = self.conv2.backward(&cache.a2, dout)?;
        self.act.backward_inplace(&cache.a2, &mut da2);
        let dc1 = self.bn2.backward(&cache.bn2, &da2)?;
        drop(da2);
        let conv1_in = cache.a1.as_ref().unwrap_or(&cache.x);
        let mut dx = self.conv1.backward(conv1_in, &dc1)?;
        if let (Some(bn), Some(a1), Some(bc)) = (self.bn1.as_mut(), cache.a1.as_ref(), cache.bn1.as_ref()) {
            self.act.backward_inplace(a1, &mut dx);
            dx = bn.backward(bc, &dx)?;
        }
        match self.identity.as_mut() {
            Some(conv) => dx.add_assign(&conv.backward(&cache.x, dout)?)?,
            None => dx.add_assign(dout)?,
        }
        Ok(dx)
    }
}

impl<T: Scalar> Module<T> for ResBlock<T> {
    fn params<'a>(&'a self, out: &mut Vec<&'a Param<T>>) {
        if let Some(bn) = &self.bn1 {
            bn.params(out);
        }
        self.conv1.params(out);
        self.bn2.params(out);
        self.conv2.params(out);
        if let Some(c) = &self.identity {
            c.params(out);
        }
    }
    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param<T>>) {
        if let Some(bn) = &mut self.bn1 {
            bn.params_mut(out);
        }
        self.conv1.params_mut(out);
        self.bn2.params_mut(out);
        self.conv2.params_mut(out);
        if let Some(c) = &mut self.identity {
            c.params_mut(out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn numel(b: &ResBlock<f32>) -> usize {
        b.params_vec().iter().map(|p| p.numel()).sum()
    }

    #[test]
    fn layout_and_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b1 = ResBlock::<f32>::new("block1", 1, 20, true, 0.3, &mut rng);
        let b2 = ResBlock::<f32>::new("block2", 20, 64, false, 0.3, &mut rng);
        let b3 = ResBlock::<f32>::new("block3", 64, 64, false, 0.3, &mut rng);
        assert_eq!((numel(&b1), numel(&b2), numel(&b3)), (3_900, 50_024, 74_112));
        assert!(b1.bn1.is_none() && b1.identity.is_some());
        assert!(b3.identity.is_none());
        let names: Vec<_> = b1.params_vec().iter().map(|p| p.name.clone()).collect();
        assert_eq!(names[0], "block1.conv1.weight");
        assert_eq!(names[2], "block1.bn.gamma");
    }

    #[test]
    fn shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b1 = ResBlock::<f32>::new("block1", 1, 20, true, 0.3, &mut rng);
        let b3 = ResBlock::<f32>::new("block3", 64, 64, false, 0.3, &mut rng);
        let (y, _, _) = b1.forward(&Tensor::zeros(&[1, 1, 80, 402]), Mode::Eval, false).unwrap();
        assert_eq!(y.shape(), &[1, 20, 80, 402]);
        let (y, _, _) = b3.forward(&Tensor::zeros(&[1, 64, 5, 25]), Mode::Eval, false).unwrap();
        assert_eq!(y.shape(), &[1, 64, 5, 25]);
    }

    #[test]
    fn zero_main_path_leaves_the_skip() {
        let mut b = ResBlock::<f64>::new("b", 2, 3, true, 0.3, &mut ChaCha8Rng::seed_from_u64(1));
        for c in [&mut b.conv1, &mut b.conv2] {
            c.weight.value.fill(0.0);
            c.bias.value.fill(0.0);
        }
        let x = random(&[1, 2, 5, 6], 2);
        let (y, _, _) = b.forward(&x, Mode::Eval, false).unwrap();
        assert_eq!(y, b.identity.as_ref().unwrap().forward(&x).unwrap());
    }

    #[test]
    fn rejects_wrong_channels() {
        let b = ResBlock::<f64>::new("b", 2, 3, false, 0.3, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(b.forward(&Tensor::zeros(&[1, 3, 4, 4]), Mode::Eval, false).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (cin, cout, first) in [(1, 3, true), (3, 3, false), (2, 3, false)] {
            let mut b = ResBlock::<f64>::new("b", cin, cout, first, 0.3, &mut ChaCha8Rng::seed_from_u64(3));
            let x = random(&[2, cin, 4, 5], 4);
            let w = random(&[2, cout, 4, 5], 5);
            let loss = |b: &ResBlock<f64>, x: &Tensor<f64>| -> f64 {
                b.forward(x, Mode::Train, false).unwrap().0.data().iter().zip(w.data()).map(|(y, w)| y * w).sum()
            };
            let (_, cache, _) = b.forward(&x, Mode::Train, true).unwrap();
            let dx = b.backward(&cache.unwrap(), &w).unwrap();
            let h = 1e-5;
            for i in 0..x.len() {
                let mut xp = x.clone();
                xp.data_mut()[i] += h;
                let mut xm = x.clone();
                xm.data_mut()[i] -= h;
                let fd = (loss(&b, &xp) - loss(&b, &xm)) / (2.0 * h);
                assert!((fd - dx.data()[i]).abs() < 1e-5 * (1.0 + fd.abs()), "x[{i}]: {fd} vs {}", dx.data()[i]);
            }
            let n_params = b.params_vec().len();
            for pi in 0..n_params {
                for k in [0usize, 1] {
                    let analytic = b.params_vec()[pi].grad.data()[k];
                    let mut bp = b.clone();
                    bp.params_mut_vec()[pi].value.data_mut()[k] += h;
                    let mut bm = b.clone();
                    bm.params_mut_vec()[pi].value.data_mut()[k] -= h;
                    let fd = (loss(&bp, &x) - loss(&bm, &x)) / (2.0 * h);
                    assert!((fd - analytic).abs() < 1e-5 * (1.0 + fd.abs()), "param {pi}[{k}]: {fd} vs {analytic}");
                }
            }
        }
    }

    trait ParamsMut {
        fn params_mut_vec(&mut self) -> Vec<&mut Param<f64>>;
    }

    impl ParamsMut for ResBlock<f64> {
        fn params_mut_vec(&mut self) -> Vec<&mut Param<f64>> {
            let mut v = Vec::new();
            self.params_mut(&mut v);
            v
        }
    }
}
