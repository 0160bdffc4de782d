use alloc::vec::Vec;

use rand::Rng;

use crate::nn::activation::sigmoid;
use crate::nn::{maxpool2d, maxpool2d_backward, Linear, Module, Param, PoolIndex};
use crate::{Result, Scalar, Tensor};

/// How the channel gates are applied to the pooled map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FmsVariant {
    /// `y * s + s`
    ScaleAdd,
    /// `y * s`
    ScaleOnly,
}

/// Max pool, feature-map scaling, max pool.
///
/// The gate vector is `sigmoid(fc(mean_hw(pooled)))`, one value per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct FmsBlock<T> {
    pub fc: Linear<T>,
    variant: FmsVariant,
}

#[derive(Clone, Debug)]
pub struct FmsCache<T> {
    pool0: PoolIndex,
    pooled: Tensor<T>,
    gap: Tensor<T>,
    gate: Tensor<T>,
    pool1: PoolIndex,
}

impl<T: Scalar> FmsBlock<T> {
    pub fn new(name: &str, channels: usize, variant: FmsVariant, rng: &mut impl Rng) -> Self {
        Self { fc: Linear::new(&alloc::format!("{name}.fc"), channels, channels, rng), variant }
    }

    pub fn forward(&self, x: &Tensor<T>, record: bool) -> Result<(Tensor<T>, Option<FmsCache<T>>)> {
        let (pooled, pool0) = maxpool2d(x)?;
        let (b, c, h, w) = pooled.dims4()?;
        let hw = h * w;
        let mut gap = Tensor::zeros(&[b, c]);
        for (g, plane) in gap.data_mut().iter_mut().zip(pooled.data().chunks_exact(hw)) {
            let s = plane.iter().fold(<T::Acc as num_traits::Zero>::zero(), |a, v| a + v.widen());
            *g = T::narrow(s / <T::Acc as Scalar>::from_f64(hw as f64));
        }
        let mut gate = self.fc.forward(&gap)?;
        gate.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
        let mut scaled = pooled.clone();
        for (plane, &s) in scaled.data_mut().chunks_exact_mut(hw).zip(gate.data()) {
            match self.variant {
                FmsVariant::ScaleAdd => plane.iter_mut().for_each(|v| *v = *v * s + s),
                FmsVariant::ScaleOnly => plane.iter_mut().for_each(|v| *v = *v * s),
            }
        }
        let (out, pool1) = maxpool2d(&scaled)?;
        let cache = record.then(|| FmsCache { pool0, pooled, gap, gate, pool1 });
        Ok((out, cache))
    }

    pub fn backward(&mut self, cache: &FmsCache<T>, dout: &Tensor<T>) -> Result<Tensor<T>> {
        let dscaled = maxpool2d_backward(&cache.pool1, dout);
        let (b, c, h, w) = cache.pooled.dims4()?;
        let hw = h * w;
        let mut dpooled = Tensor::zeros(cache.pooled.shape());
        let mut dz = Tensor::zeros(&[b, c]);
        let add = T::from_f64(if self.variant == FmsVariant::ScaleAdd { 1.0 } else { 0.0 });
        for (i, &s) in cache.gate.data().iter().enumerate() {
            let ds_plane = &dscaled.data()[i * hw..(i + 1) * hw];
            let p_plane = &cache.pooled.data()[i * hw..(i + 1) * hw];
            let mut ds = T::zero();
            for ((d, &g), &p) in dpooled.data_mut()[i * hw..(i + 1) * hw].iter_mut().zip(ds_plane).zip(p_plane) {
                *d = g * s;
                ds = ds + g * (p + add);
            }
            dz.data_mut()[i] = ds * s * (T::one() - s);
        }
        let dgap = self.fc.backward(&cache.gap, &dz)?;
        let inv = T::from_f64(1.0 / hw as f64);
        for (plane, &g) in dpooled.data_mut().chunks_exact_mut(hw).zip(dgap.data()) {
            plane.iter_mut().for_each(|d| *d = *d + g * inv);
        }
        Ok(maxpool2d_backward(&cache.pool0, &dpooled))
    }
}

impl<T: Scalar> Module<T> for FmsBlock<T> {
    fn params<'a>(&'a self, out: &mut Vec<&'a Param<T>>) {
        self.fc.params(out);
    }
    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param<T>>) {
        self.fc.params_mut(out);
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

    fn block(c: usize, variant: FmsVariant) -> FmsBlock<f64> {
        FmsBlock::new("fms", c, variant, &mut ChaCha8Rng::seed_from_u64(0))
    }

    #[test]
    fn table_shape() {
        let b = FmsBlock::<f32>::new("fms1", 20, FmsVariant::ScaleAdd, &mut ChaCha8Rng::seed_from_u64(0));
        let (y, _) = b.forward(&Tensor::zeros(&[1, 20, 80, 402]), false).unwrap();
        assert_eq!(y.shape(), &[1, 20, 20, 100]);
        assert_eq!(b.fc.weight.numel() + b.fc.bias.numel(), 420);
    }

    fn pool(x: &Tensor<f64>) -> Tensor<f64> {
        maxpool2d(x).unwrap().0
    }

    #[test]
    fn zero_fc_gives_half_gates() {
        let mut b = block(3, FmsVariant::ScaleAdd);
        b.fc.weight.value.fill(0.0);
        b.fc.bias.value.fill(0.0);
        let x = random(&[2, 3, 8, 8], 1);
        let (y, _) = b.forward(&x, false).unwrap();
        let expected = pool(&pool(&x).map(|v| 0.5 * v + 0.5));
        assert_eq!(y, expected);
    }

    #[test]
    fn saturated_gates_add_one() {
        let mut b = block(3, FmsVariant::ScaleAdd);
        b.fc.weight.value.fill(0.0);
        b.fc.bias.value.fill(50.0);
        let x = random(&[1, 3, 8, 12], 2);
        let (y, _) = b.forward(&x, false).unwrap();
        let expected = pool(&pool(&x).map(|v| v + 1.0));
        for (a, e) in y.data().iter().zip(expected.data()) {
            assert!((a - e).abs() < 1e-6);
        }
    }

    #[test]
    fn scale_only_variant() {
        let mut b = block(2, FmsVariant::ScaleOnly);
        b.fc.weight.value.fill(0.0);
        b.fc.bias.value.fill(0.0);
        let x = random(&[1, 2, 4, 4], 3);
        assert_eq!(b.forward(&x, false).unwrap().0, pool(&pool(&x).map(|v| 0.5 * v)));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for variant in [FmsVariant::ScaleAdd, FmsVariant::ScaleOnly] {
            let mut b = block(3, variant);
            let x = random(&[2, 3, 6, 9], 4);
            let w = random(&[2, 3, 1, 2], 5);
            let loss = |b: &FmsBlock<f64>, x: &Tensor<f64>| -> f64 {
                b.forward(x, false).unwrap().0.data().iter().zip(w.data()).map(|(y, w)| y * w).sum()
            };
            let (_, cache) = b.forward(&x, true).unwrap();
            let dx = b.backward(&cache.unwrap(), &w).unwrap();
            let h = 1e-6;
            for i in 0..x.len() {
                let mut xp = x.clone();
                xp.data_mut()[i] += h;
                let mut xm = x.clone();
                xm.data_mut()[i] -= h;
                let fd = (loss(&b, &xp) - loss(&b, &xm)) / (2.0 * h);
                assert!((fd - dx.data()[i]).abs() < 1e-6, "x[{i}]: {fd} vs {}", dx.data()[i]);
            }
            for k in 0..b.fc.weight.numel() {
                let mut bp = b.clone();
                bp.fc.weight.value.data_mut()[k] += h;
                let mut bm = b.clone();
                bm.fc.weight.value.data_mut()[k] -= h;
                let fd = (loss(&bp, &x) - loss(&bm, &x)) / (2.0 * h);
                assert!((fd - b.fc.weight.grad.data()[k]).abs() < 1e-6);
            }
        }
    }
}
