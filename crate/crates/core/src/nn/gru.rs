//! Bidirectional GRU with separate input and hidden biases per gate
//! (gate order: reset, update, candidate).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;

use super::activation::sigmoid;
use super::{Module, Param};
use crate::{gemm, Error, Result, Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct GruDirection<T> {
    pub w_input: Param<T>,
    pub w_hidden: Param<T>,
    pub b_input: Param<T>,
    pub b_hidden: Param<T>,
    reverse: bool,
}

/// Per-step values kept for backpropagation through time, each `[T][B * H]`
/// (concatenated), indexed by *time step*, not scan position.
#[derive(Clone, Debug)]
struct DirCache<T> {
    reset: Vec<T>,
    update: Vec<T>,
    cand: Vec<T>,
    /// `W_hn h + b_hn`, needed for the reset-gate gradient.
    hidden_n: Vec<T>,
    h_prev: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct GruCache<T> {
    dirs: [DirCache<T>; 2],
}

impl<T: Scalar> GruDirection<T> {
    fn new(name: &str, input: usize, hidden: usize, reverse: bool, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            w_input: Param::uniform(format!("{name}.w_input"), &[3 * hidden, input], bound, rng),
            w_hidden: Param::uniform(format!("{name}.w_hidden"), &[3 * hidden, hidden], bound, rng),
            b_input: Param::zeros(format!("{name}.b_input"), &[3 * hidden]),
            b_hidden: Param::zeros(format!("{name}.b_hidden"), &[3 * hidden]),
            reverse,
        }
    }

    fn hidden(&self) -> usize {
        self.w_hidden.value.shape()[1]
    }

    fn steps(&self, t: usize) -> Vec<usize> {
        if self.reverse {
            (0..t).rev().collect()
        } else {
            (0..t).collect()
        }
    }

    /// Writes this direction's states into `out [B, T, 2H]` at column
    /// offset `col`.
    fn forward(&self, x: &Tensor<T>, out: &mut [T], col: usize, record: bool) -> Option<DirCache<T>> {
        let (b, t, i) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let h = self.hidden();
        let g3 = 3 * h;
        // input projections for all (b, t) rows at once
        let mut xi = vec![T::zero(); b * t * g3];
        for row in xi.chunks_exact_mut(g3) {
            row.copy_from_slice(self.b_input.value.data());
        }
        gemm::nt(b * t, i, g3, x.data(), self.w_input.value.data(), &mut xi, true);

        let mut cache = record.then(|| DirCache {
            reset: vec![T::zero(); t * b * h],
            update: vec![T::zero(); t * b * h],
            cand: vec![T::zero(); t * b * h],
            hidden_n: vec![T::zero(); t * b * h],
            h_prev: vec![T::zero(); t * b * h],
        });
        let mut state = vec![T::zero(); b * h];
        let mut hh = vec![T::zero(); b * g3];
        for step in self.steps(t) {
            for row in hh.chunks_exact_mut(g3) {
                row.copy_from_slice(self.b_hidden.value.data());
            }
            gemm::nt(b, h, g3, &state, self.w_hidden.value.data(), &mut hh, true);
            if let Some(c) = cache.as_mut() {
                c.h_prev[step * b * h..(step + 1) * b * h].copy_from_slice(&state);
            }
            for bi in 0..b {
                let xr = &xi[(bi * t + step) * g3..][..g3];
                let hr = &hh[bi * g3..][..g3];
                for j in 0..h {
                    let r = sigmoid(xr[j] + hr[j]);
                    let z = sigmoid(xr[h + j] + hr[h + j]);
                    let n = (xr[2 * h + j] + r * hr[2 * h + j]).tanh();
                    let prev = state[bi * h + j];
                    let next = (T::one() - z) * n + z * prev;
                    state[bi * h + j] = next;
                    out[(bi * t + step) * 2 * h + col + j] = next;
                    if let Some(c) = cache.as_mut() {
                        let k = step * b * h + bi * h + j;
                        c.reset[k] = r;
                        c.update[k] = z;
                        c.cand[k] = n;
                        c.hidden_n[k] = hr[2 * h + j];
                    }
                }
            }
        }
        cache
    }

    /// Accumulates parameter gradients and adds `dL/dx` into `dx`.
    fn backward(&mut self, x: &Tensor<T>, cache: &DirCache<T>, dout: &Tensor<T>, col: usize, dx: &mut Tensor<T>) {
        let (b, t, i) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let h = self.hidden();
        let g3 = 3 * h;
        let mut dxi = vec![T::zero(); b * t * g3];
        let mut dh = vec![T::zero(); b * h];
        let mut dgates = vec![T::zero(); b * g3];
        let mut dprev = vec![T::zero(); b * h];
        for step in self.steps(t).into_iter().rev() {
            for bi in 0..b {
                for j in 0..h {
                    let k = step * b * h + bi * h + j;
                    let (r, z, n, hn, prev) =
                        (cache.reset[k], cache.update[k], cache.cand[k], cache.hidden_n[k], cache.h_prev[k]);
                    let g = dh[bi * h + j] + dout.data()[(bi * t + step) * 2 * h + col + j];
                    let dn = g * (T::one() - z);
                    let dz = g * (prev - n);
                    dprev[bi * h + j] = g * z;
                    let dan = dn * (T::one() - n * n);
                    let dar = dan * hn * r * (T::one() - r);
                    let daz = dz * z * (T::one() - z);
                    let xrow = &mut dxi[(bi * t + step) * g3..][..g3];
                    xrow[j] = dar;
                    xrow[h + j] = daz;
                    xrow[2 * h + j] = dan;
                    let hrow = &mut dgates[bi * g3..][..g3];
                    hrow[j] = dar;
                    hrow[h + j] = daz;
                    hrow[2 * h + j] = dan * r;
                }
            }
            let prev = &cache.h_prev[step * b * h..(step + 1) * b * h];
            gemm::tn(g3, b, h, &dgates, prev, self.w_hidden.grad.data_mut(), true);
            for row in dgates.chunks_exact(g3) {
                for (gb, &d) in self.b_hidden.grad.data_mut().iter_mut().zip(row) {
                    *gb = *gb + d;
                }
            }
            gemm::nn(b, g3, h, &dgates, self.w_hidden.value.data(), &mut dprev, true);
            dh.copy_from_slice(&dprev);
        }
        gemm::tn(g3, b * t, i, &dxi, x.data(), self.w_input.grad.data_mut(), true);
        for row in dxi.chunks_exact(g3) {
            for (gb, &d) in self.b_input.grad.data_mut().iter_mut().zip(row) {
                *gb = *gb + d;
            }
        }
        gemm::nn(b * t, g3, i, &dxi, self.w_input.value.data(), dx.data_mut(), true);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiGru<T> {
    pub forward_dir: GruDirection<T>,
    pub backward_dir: GruDirection<T>,
    input: usize,
    hidden: usize,
}

impl<T: Scalar> BiGru<T> {
    pub fn new(name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            forward_dir: GruDirection::new(&format!("{name}.fwd"), input, hidden, false, rng),
            backward_dir: GruDirection::new(&format!("{name}.bwd"), input, hidden, true, rng),
            input,
            hidden,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// `x [B, T, I] -> [B, T, 2H]`: forward states in the first H columns,
    /// backward states in the last H.
    pub fn forward(&self, x: &Tensor<T>, record: bool) -> Result<(Tensor<T>, Option<GruCache<T>>)> {
        let (b, t) = match x.shape() {
            [b, t, i] if *i == self.input && *t >= 1 => (*b, *t),
            s => return Err(Error::ShapeMismatch(format!("gru expects [B, T>=1, {}], got {s:?}", self.input))),
        };
        let mut out = Tensor::zeros(&[b, t, 2 * self.hidden]);
        let f = self.forward_dir.forward(x, out.data_mut(), 0, record);
        let r = self.backward_dir.forward(x, out.data_mut(), self.hidden, record);
        let cache = match (f, r) {
            (Some(f), Some(r)) => Some(GruCache { dirs: [f, r] }),
            _ => None,
        };
        Ok((out, cache))
    }

    pub fn backward(&mut self, x: &Tensor<T>, cache: &GruCache<T>, dout: &Tensor<T>) -> Result<Tensor<T>> {
        if dout.shape() != [x.shape()[0], x.shape()[1], 2 * self.hidden] {
            return Err(Error::ShapeMismatch(format!("gru backward: dout {:?}", dout.shape())));
        }
        let mut dx = Tensor::zeros(x.shape());
        let h = self.hidden;
        self.forward_dir.backward(x, &cache.dirs[0], dout, 0, &mut dx);
        self.backward_dir.backward(x, &cache.dirs[1], dout, h, &mut dx);
        Ok(dx)
    }
}

impl<T: Scalar> Module<T> for BiGru<T> {
    fn params<'a>(&'a self, out: &mut Vec<&'a Param<T>>) {
        for d in [&self.forward_dir, &self.backward_dir] {
            out.extend([&d.w_input, &d.w_hidden, &d.b_input, &d.b_hidden]);
        }
    }
    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param<T>>) {
        for d in [&mut self.forward_dir, &mut self.backward_dir] {
            out.push(&mut d.w_input);
            out.push(&mut d.w_hidden);
            out.push(&mut d.b_input);
            out.push(&mut d.b_hidden);
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

    fn randomise(gru: &mut BiGru<f64>, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = Vec::new();
        gru.params_mut(&mut ps);
        for p in ps {
            p.value.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.8..0.8));
        }
    }

    /// Scalar recurrence, one gate at a time, straight from the equations.
    fn oracle_direction(d: &GruDirection<f64>, x: &[f64], t: usize, i: usize, reverse: bool) -> Vec<Vec<f64>> {
        let h = d.hidden();
        let (wi, wh, bi, bh) =
            (d.w_input.value.data(), d.w_hidden.value.data(), d.b_input.value.data(), d.b_hidden.value.data());
        let dot = |w: &[f64], row: usize, v: &[f64]| -> f64 { (0..v.len()).map(|c| w[row * v.len() + c] * v[c]).sum() };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut state = vec![0.0; h];
        let mut outs = vec![vec![0.0; h]; t];
        let order: Vec<usize> = if reverse { (0..t).rev().collect() } else { (0..t).collect() };
        for step in order {
            let xt = &x[step * i..(step + 1) * i];
            let mut next = vec![0.0; h];
            for j in 0..h {
                let r = sig(dot(wi, j, xt) + bi[j] + dot(wh, j, &state) + bh[j]);
                let z = sig(dot(wi, h + j, xt) + bi[h + j] + dot(wh, h + j, &state) + bh[h + j]);
                let n = (dot(wi, 2 * h + j, xt) + bi[2 * h + j] + r * (dot(wh, 2 * h + j, &state) + bh[2 * h + j])).tanh();
                next[j] = (1.0 - z) * n + z * state[j];
            }
            state = next;
            outs[step] = state.clone();
        }
        outs
    }

    #[test]
    fn zero_weights_keep_zero_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut gru = BiGru::<f64>::new("g", 3, 4, &mut rng);
        let mut ps = Vec::new();
        gru.params_mut(&mut ps);
        ps.into_iter().for_each(|p| p.value.fill(0.0));
        let (y, _) = gru.forward(&random(&[2, 5, 3], 1), false).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_directions_agree_with_equal_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut gru = BiGru::<f64>::new("g", 3, 4, &mut rng);
        randomise(&mut gru, 3);
        let mut mirror = gru.forward_dir.clone();
        mirror.reverse = true;
        gru.backward_dir = mirror;
        let (y, _) = gru.forward(&random(&[2, 1, 3], 4), false).unwrap();
        for row in y.data().chunks_exact(8) {
            assert_eq!(row[..4], row[4..]);
        }
    }

    #[test]
    fn matches_scalar_recurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut gru = BiGru::<f64>::new("g", 2, 2, &mut rng);
        randomise(&mut gru, 7);
        let x = random(&[1, 3, 2], 8);
        let (y, _) = gru.forward(&x, false).unwrap();
        let f = oracle_direction(&gru.forward_dir, x.data(), 3, 2, false);
        let r = oracle_direction(&gru.backward_dir, x.data(), 3, 2, true);
        for t in 0..3 {
            for j in 0..2 {
                assert!((y.data()[t * 4 + j] - f[t][j]).abs() < 1e-5);
                assert!((y.data()[t * 4 + 2 + j] - r[t][j]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut gru = BiGru::<f64>::new("g", 3, 2, &mut rng);
        randomise(&mut gru, 11);
        let x = random(&[2, 4, 3], 12);
        let proj = random(&[2, 4, 4], 13);
        let loss = |g: &BiGru<f64>, x: &Tensor<f64>| -> f64 {
            g.forward(x, false).unwrap().0.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = gru.forward(&x, true).unwrap();
        let dx = gru.backward(&x, &cache.unwrap(), &proj).unwrap();
        let h = 1e-6;
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data_mut()[i] += h;
            xm.data_mut()[i] -= h;
            let fd = (loss(&gru, &xp) - loss(&gru, &xm)) / (2.0 * h);
            assert!((fd - dx.data()[i]).abs() < 1e-7, "dx[{i}]");
        }
        let n_params = {
            let mut ps = Vec::new();
            gru.params(&mut ps);
            ps.len()
        };
        for pi in 0..n_params {
            let len = {
                let mut ps = Vec::new();
                gru.params(&mut ps);
                ps[pi].numel()
            };
            for e in 0..len {
                let mut probe = gru.clone();
                let analytic = {
                    let mut ps = Vec::new();
                    gru.params(&mut ps);
                    ps[pi].grad.data()[e]
                };
                let bump = |g: &mut BiGru<f64>, d: f64| {
                    let mut ps = Vec::new();
                    g.params_mut(&mut ps);
                    ps[pi].value.data_mut()[e] += d;
                };
                bump(&mut probe, h);
                let up = loss(&probe, &x);
                bump(&mut probe, -2.0 * h);
                let fd = (up - loss(&probe, &x)) / (2.0 * h);
                assert!((fd - analytic).abs() < 1e-7, "param {pi} elem {e}: {fd} vs {analytic}");
            }
        }
    }

    #[test]
    fn parameter_count_per_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let gru = BiGru::<f32>::new("g", 128, 64, &mut rng);
        let mut ps = Vec::new();
        gru.params(&mut ps);
        let total: usize = ps.iter().map(|p| p.numel()).sum();
        assert_eq!(total, 2 * 3 * (128 * 64 + 64 * 64 + 2 * 64));
    }
}
