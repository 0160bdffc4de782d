//! Iterative radix-2 complex FFT in f64, used for the 512-point spectra.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[cfg(not(feature = "std"))]
use num_traits::Float;

pub struct Fft {
    n: usize,
    twiddle: Vec<(f64, f64)>,
    bitrev: Vec<usize>,
}

impl Fft {
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two() && n >= 2, "FFT size must be a power of two");
        let bits = n.trailing_zeros();
        let twiddle = (0..n / 2)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / n as f64;
                (a.cos(), a.sin())
            })
            .collect();
        let bitrev = (0..n).map(|i| i.reverse_bits() >> (usize::BITS - bits)).collect();
        Self { n, twiddle, bitrev }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    /// In-place forward transform of `(re, im)`.
    pub fn forward(&self, re: &mut [f64], im: &mut [f64]) {
        let n = self.n;
        assert!(re.len() == n && im.len() == n);
        for i in 0..n {
            let j = self.bitrev[i];
            if j > i {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let step = n / size;
            for start in (0..n).step_by(size) {
                for k in 0..half {
                    let (wr, wi) = self.twiddle[k * step];
                    let a = start + k;
                    let b = a + half;
                    let tr = re[b] * wr - im[b] * wi;
                    let ti = re[b] * wi + im[b] * wr;
                    re[b] = re[a] - tr;
                    im[b] = im[a] - ti;
                    re[a] += tr;
                    im[a] += ti;
                }
            }
            size *= 2;
        }
    }

    /// `|X[k]|^2` for k in `0..=n/2` of a real frame zero-padded to `n`.
    pub fn power(&self, frame: &[f64], re: &mut [f64], im: &mut [f64], out: &mut [f64]) {
        assert!(frame.len() <= self.n && out.len() == self.n / 2 + 1);
        re.fill(0.0);
        im.fill(0.0);
        re[..frame.len()].copy_from_slice(frame);
        self.forward(re, im);
        for (k, o) in out.iter_mut().enumerate() {
            *o = re[k] * re[k] + im[k] * im[k];
        }
    }
}
