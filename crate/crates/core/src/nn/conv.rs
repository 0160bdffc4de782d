#[cfg(not(feature = "std"))]
use num_traits::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{Module, Param};
use crate::{gemm, Error, Result, Scalar, Tensor};

/// Stride-1 convolution with "same" zero padding (kernel 1 or 3).
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(name: &str, in_channels: usize, out_channels: usize, kernel: usize, rng: &mut impl Rng) -> Self {
        assert!(kernel == 1 || kernel == 3, "only 1x1 and 3x3 kernels are supported");
        let fan_in = in_channels * kernel * kernel;
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self {
            weight: Param::uniform(format!("{name}.weight"), &[out_channels, in_channels, kernel, kernel], bound, rng),
            bias: Param::zeros(format!("{name}.bias"), &[out_channels]),
            in_channels,
            out_channels,
            kernel,
        }
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d(x, &self.weight.value, &self.bias.value)
    }

    /// Accumulates weight/bias gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, c, h, w) = x.dims4()?;
        let co = self.out_channels;
        if dy.shape() != [b, co, h, w] {
            return Err(Error::ShapeMismatch(format!("conv backward: dy {:?}", dy.shape())));
        }
        let hw = h * w;
        let wmat = self.weight.value.data();
        let mut dx = Tensor::zeros(x.shape());
        if self.kernel == 1 {
            for bi in 0..b {
                let xb = &x.data()[bi * c * hw..(bi + 1) * c * hw];
                let dyb = &dy.data()[bi * co * hw..(bi + 1) * co * hw];
                for (o, db) in self.bias.grad.data_mut().iter_mut().enumerate() {
                    *db = *db + dyb[o * hw..(o + 1) * hw].iter().fold(T::zero(), |a, &v| a + v);
                }
                gemm::nt(co, hw, c, dyb, xb, self.weight.grad.data_mut(), true);
                gemm::tn(c, co, hw, wmat, dyb, &mut dx.data_mut()[bi * c * hw..(bi + 1) * c * hw], false);
            }
            return Ok(dx);
        }
        let kdim = c * 9;
        let tiles = tiles(b, h, w);
        let cap = tiles.iter().map(|t| tile_cols(t, w)).max().unwrap_or(0);
        let mut cols = vec![T::zero(); kdim * cap];
        let mut dcols = vec![T::zero(); kdim * cap];
        let mut dyt = vec![T::zero(); co * cap];
        for tile in &tiles {
            let n = tile_cols(tile, w);
            let mut off = 0;
            for run in tile {
                let len = (run.y1 - run.y0) * w;
                unfold(&x.data()[run.b * c * hw..][..c * hw], c, h, w, run, &mut cols, n, off);
                for o in 0..co {
                    dyt[o * n + off..][..len].copy_from_slice(&dy.data()[(run.b * co + o) * hw + run.y0 * w..][..len]);
                }
                off += len;
            }
            for (o, db) in self.bias.grad.data_mut().iter_mut().enumerate() {
                *db = *db + dyt[o * n..(o + 1) * n].iter().fold(T::zero(), |a, &v| a + v);
            }
            gemm::nt(co, n, kdim, &dyt, &cols, self.weight.grad.data_mut(), true);
            gemm::tn(kdim, co, n, wmat, &dyt, &mut dcols, false);
            let mut off = 0;
            for run in tile {
                fold(&dcols, c, h, w, run, n, off, &mut dx.data_mut()[run.b * c * hw..][..c * hw]);
                off += (run.y1 - run.y0) * w;
            }
        }
        Ok(dx)
    }
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn params<'a>(&'a self, out: &mut Vec<&'a Param<T>>) {
        out.push(&self.weight);
        out.push(&self.bias);
    }
    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param<T>>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
}

/// Unfolded patches for one tile stay cache resident while they are multiplied.
const TILE_COLS: usize = 512;

/// Image rows `[y0, y1)` of sample `b`. A tile is a list of runs laid side
/// by side in the patch matrix.
#[derive(Clone, Copy, Debug)]
struct Run {
    b: usize,
    y0: usize,
    y1: usize,
}

/// Bands of rows for large images, groups of whole samples for small ones.
fn tiles(b: usize, h: usize, w: usize) -> Vec<Vec<Run>> {
    let hw = h * w;
    if hw >= TILE_COLS {
        let rows = (TILE_COLS / w).max(1);
        (0..b)
            .flat_map(|bi| (0..h).step_by(rows).map(move |y0| vec![Run { b: bi, y0, y1: (y0 + rows).min(h) }]))
            .collect()
    } else {
        let per = TILE_COLS / hw.max(1);
        (0..b).step_by(per).map(|b0| (b0..(b0 + per).min(b)).map(|bi| Run { b: bi, y0: 0, y1: h }).collect()).collect()
    }
}

fn tile_cols(tile: &[Run], w: usize) -> usize {
    tile.iter().map(|r| (r.y1 - r.y0) * w).sum()
}

/// Writes the zero-padded 3x3 neighbourhoods of one run into columns
/// `off..` of the `[c * 9, ld]` patch matrix.
#[allow(clippy::too_many_arguments)]
fn unfold<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, run: &Run, cols: &mut [T], ld: usize, off: usize) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ci * 3 + ky) * 3 + kx) * ld + off..];
                for y in run.y0..run.y1 {
                    let dst = &mut row[(y - run.y0) * w..][..w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`unfold`]: adds column gradients back onto the sample image.
#[allow(clippy::too_many_arguments)]
fn fold<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, run: &Run, ld: usize, off: usize, dx: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ci * 3 + ky) * 3 + kx) * ld + off..];
                for y in run.y0..run.y1 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[(y - run.y0) * w..][..w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&src[1..]).for_each(|(d, &s)| *d = *d + s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s),
                        _ => dst[1..].iter_mut().zip(&src[..w - 1]).for_each(|(d, &s)| *d = *d + s),
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `x [B, C_in, H, W]` with `weight [C_out, C_in, k, k]`
/// (k in {1, 3}, stride 1, padding (k - 1) / 2) plus per-channel bias.
pub fn conv2d<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = x.dims4()?;
    let (co, ci, k, k2) = weight.dims4()?;
    if ci != c || k != k2 || !(k == 1 || k == 3) || bias.shape() != [co] {
        return Err(Error::ShapeMismatch(format!(
            "conv2d: input {:?}, weight {:?}, bias {:?}",
            x.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    let hw = h * w;
    let mut y = Tensor::zeros(&[b, co, h, w]);
    if k == 1 {
        for bi in 0..b {
            let xb = &x.data()[bi * c * hw..(bi + 1) * c * hw];
            let yb = &mut y.data_mut()[bi * co * hw..(bi + 1) * co * hw];
            for (o, &bv) in bias.data().iter().enumerate() {
                yb[o * hw..(o + 1) * hw].fill(bv);
            }
            gemm::nn(co, c, hw, weight.data(), xb, yb, true);
        }
        return Ok(y);
    }
    let kdim = c * 9;
    let tiles = tiles(b, h, w);
    let cap = tiles.iter().map(|t| tile_cols(t, w)).max().unwrap_or(0);
    let mut cols = vec![T::zero(); kdim * cap];
    let mut out = vec![T::zero(); co * cap];
    for tile in &tiles {
        let n = tile_cols(tile, w);
        let mut off = 0;
        for run in tile {
            unfold(&x.data()[run.b * c * hw..][..c * hw], c, h, w, run, &mut cols, n, off);
            off += (run.y1 - run.y0) * w;
        }
        gemm::nn(co, kdim, n, weight.data(), &cols, &mut out, false);
        let mut off = 0;
        for run in tile {
            let len = (run.y1 - run.y0) * w;
            for (o, &bv) in bias.data().iter().enumerate() {
                let dst = &mut y.data_mut()[(run.b * co + o) * hw + run.y0 * w..][..len];
                dst.iter_mut().zip(&out[o * n + off..][..len]).for_each(|(d, &s)| *d = s + bv);
            }
            off += len;
        }
    }
    Ok(y)
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

    /// Six nested loops, straight from the definition.
    fn naive(x: &Tensor<f64>, wt: &Tensor<f64>, bias: &Tensor<f64>) -> Tensor<f64> {
        let (b, c, h, w) = x.dims4().unwrap();
        let (co, _, k, _) = wt.dims4().unwrap();
        let pad = (k / 2) as isize;
        let mut y = Tensor::zeros(&[b, co, h, w]);
        for bi in 0..b {
            for o in 0..co {
                for yy in 0..h {
                    for xx in 0..w {
                        let mut acc = bias.data()[o];
                        for ci in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let sy = yy as isize + ky as isize - pad;
                                    let sx = xx as isize + kx as isize - pad;
                                    if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                                        acc += wt.data()[((o * c + ci) * k + ky) * k + kx]
                                            * x.data()[((bi * c + ci) * h + sy as usize) * w + sx as usize];
                                    }
                                }
                            }
                        }
                        y.data_mut()[((bi * co + o) * h + yy) * w + xx] = acc;
                    }
                }
            }
        }
        y
    }

    /// Direct sums for `dL/dx` and `dL/dW` given upstream `dy`.
    fn naive_backward(x: &Tensor<f64>, wt: &Tensor<f64>, dy: &Tensor<f64>) -> (Vec<f64>, Vec<f64>) {
        let (b, c, h, w) = x.dims4().unwrap();
        let co = wt.shape()[0];
        let (mut dx, mut dw) = (vec![0.0; x.len()], vec![0.0; wt.len()]);
        for bi in 0..b {
            for o in 0..co {
                for yy in 0..h {
                    for xx in 0..w {
                        let g = dy.data()[((bi * co + o) * h + yy) * w + xx];
                        for ci in 0..c {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let sy = yy as isize + ky as isize - 1;
                                    let sx = xx as isize + kx as isize - 1;
                                    if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                                        let xi = ((bi * c + ci) * h + sy as usize) * w + sx as usize;
                                        let wi = ((o * c + ci) * 3 + ky) * 3 + kx;
                                        dx[xi] += g * wt.data()[wi];
                                        dw[wi] += g * x.data()[xi];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        (dx, dw)
    }

    #[test]
    fn tiling_matches_naive_loops() {
        // Row bands with a ragged last band, rows wider than a tile, and
        // grouped small samples with a ragged last group.
        for (i, shape) in [[2usize, 2, 20, 30], [1, 2, 3, 600], [70, 1, 3, 3]].into_iter().enumerate() {
            let x = random(&shape, 20 + i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
            let mut conv = Conv2d::<f64>::new("c", shape[1], 3, 3, &mut rng);
            conv.bias.value = random(&[3], 30 + i as u64);
            let fast = conv.forward(&x).unwrap();
            let slow = naive(&x, &conv.weight.value, &conv.bias.value);
            for (a, e) in fast.data().iter().zip(slow.data()) {
                assert!((a - e).abs() < 1e-12);
            }
            let dy = random(fast.shape(), 40 + i as u64);
            let dx = conv.backward(&x, &dy).unwrap();
            let (dx_ref, dw_ref) = naive_backward(&x, &conv.weight.value, &dy);
            for (a, e) in dx.data().iter().zip(&dx_ref) {
                assert!((a - e).abs() < 1e-10);
            }
            for (a, e) in conv.weight.grad.data().iter().zip(&dw_ref) {
                assert!((a - e).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn unit_kernel_is_identity() {
        let x = random(&[2, 1, 3, 5], 1);
        let w = Tensor::full(&[1, 1, 1, 1], 1.0);
        assert_eq!(conv2d(&x, &w, &Tensor::zeros(&[1])).unwrap(), x);
    }

    #[test]
    fn ones_kernel_counts_padded_neighbours() {
        let x = Tensor::full(&[1, 1, 3, 3], 1.0f32);
        let y = conv2d(&x, &Tensor::full(&[1, 1, 3, 3], 1.0), &Tensor::zeros(&[1])).unwrap();
        assert_eq!(y.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn matches_naive_loops() {
        let x = random(&[1, 2, 4, 4], 2);
        for k in [1usize, 3] {
            let w = random(&[3, 2, k, k], 3 + k as u64);
            let b = random(&[3], 4);
            let fast = conv2d(&x, &w, &b).unwrap();
            let slow = naive(&x, &w, &b);
            for (a, e) in fast.data().iter().zip(slow.data()) {
                assert!((a - e).abs() < 1e-5);
            }
        }
        let xf: Tensor<f32> = x.cast();
        let w = random(&[3, 2, 3, 3], 9);
        let fast = conv2d(&xf, &w.cast(), &Tensor::zeros(&[3])).unwrap();
        let slow = naive(&x, &w, &Tensor::zeros(&[3]));
        for (a, e) in fast.data().iter().zip(slow.data()) {
            assert!((*a as f64 - e).abs() < 1e-5);
        }
    }

    #[test]
    fn rejects_channel_mismatch() {
        let x = Tensor::<f32>::zeros(&[1, 2, 4, 4]);
        let w = Tensor::zeros(&[3, 1, 3, 3]);
        assert!(matches!(conv2d(&x, &w, &Tensor::zeros(&[3])), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for k in [1usize, 3] {
            let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
            let mut conv = Conv2d::<f64>::new("c", 2, 3, k, &mut rng);
            conv.bias.value = random(&[3], 8);
            let x = random(&[2, 2, 3, 4], 5);
            let proj = random(&[2, 3, 3, 4], 6);
            let loss = |conv: &Conv2d<f64>, x: &Tensor<f64>| -> f64 {
                conv.forward(x).unwrap().data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
            };
            let dx = conv.backward(&x, &proj).unwrap();
            let h = 1e-6;
            for i in 0..x.len() {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp.data_mut()[i] += h;
                xm.data_mut()[i] -= h;
                let fd = (loss(&conv, &xp) - loss(&conv, &xm)) / (2.0 * h);
                assert!((fd - dx.data()[i]).abs() < 1e-7);
            }
            let analytic = conv.weight.grad.clone();
            for i in 0..analytic.len() {
                let mut c2 = conv.clone();
                c2.weight.value.data_mut()[i] += h;
                let up = loss(&c2, &x);
                c2.weight.value.data_mut()[i] -= 2.0 * h;
                let fd = (up - loss(&c2, &x)) / (2.0 * h);
                assert!((fd - analytic.data()[i]).abs() < 1e-7);
            }
            for o in 0..3 {
                let expected: f64 = (0..2).map(|b| proj.data()[(b * 3 + o) * 12..][..12].iter().sum::<f64>()).sum();
                assert!((conv.bias.grad.data()[o] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv = Conv2d::<f32>::new("c", 3, 5, 3, &mut rng);
        let y = conv.forward(&Tensor::zeros(&[2, 3, 7, 1])).unwrap();
        assert_eq!(y.shape(), &[2, 5, 7, 1]);
    }
}
