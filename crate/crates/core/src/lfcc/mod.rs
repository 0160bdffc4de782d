//! Linear-frequency cepstral coefficients.
//!
//! Pipeline: periodic-Hann framing (no centre padding) -> |FFT|^2 ->
//! triangular filters evenly spaced in Hz -> `ln(max(e, floor))` ->
//! orthonormal DCT-II, keeping the first `n_lfcc` coefficients. The result is
//! laid out `[1, n_lfcc, frames]`, ready to be a single-channel image.
//!
//! Internally every stage runs in f64; only the returned map is f32.

mod fft;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[cfg(not(feature = "std"))]
use num_traits::Float;

pub use fft::Fft;

use crate::{Error, FeatureMap, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LfccConfig {
    pub sample_rate: u32,
    pub win_ms: u32,
    pub hop_ms: u32,
    pub n_fft: usize,
    pub n_filters: usize,
    pub n_lfcc: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Floor applied to filter energies (power domain) before the log.
    pub log_floor: f64,
}

impl Default for LfccConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            win_ms: 25,
            hop_ms: 10,
            n_fft: 512,
            n_filters: 80,
            n_lfcc: 80,
            f_min: 0.0,
            f_max: 8_000.0,
            log_floor: 1e-10,
        }
    }
}

impl LfccConfig {
    pub fn win_len(&self) -> usize {
        (self.sample_rate * self.win_ms / 1000) as usize
    }

    pub fn hop_len(&self) -> usize {
        (self.sample_rate * self.hop_ms / 1000) as usize
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frame count for a waveform of `len` samples, `None` when shorter than
    /// one window.
    pub fn n_frames(&self, len: usize) -> Option<usize> {
        let win = self.win_len();
        (len >= win).then(|| 1 + (len - win) / self.hop_len())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("lfcc: {msg}")));
        if !self.n_fft.is_power_of_two() {
            return bad("n_fft must be a power of two");
        }
        if self.win_len() == 0 || self.hop_len() == 0 || self.win_len() > self.n_fft {
            return bad("window must be non-empty and fit in n_fft");
        }
        if self.n_lfcc == 0 || self.n_lfcc > self.n_filters {
            return bad("need 0 < n_lfcc <= n_filters");
        }
        if !(self.f_min >= 0.0 && self.f_min < self.f_max && self.f_max <= self.sample_rate as f64 / 2.0) {
            return bad("need 0 <= f_min < f_max <= sample_rate / 2");
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive");
        }
        Ok(())
    }
}

/// Periodic Hann window `0.5 - 0.5 cos(2 pi n / len)`.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos()).collect()
}

/// Slices the waveform into overlapping windowed frames, `[frames, win_len]`.
pub fn frame_and_window(samples: &[f32], cfg: &LfccConfig) -> Result<FeatureMap> {
    let win = cfg.win_len();
    let hop = cfg.hop_len();
    let frames = cfg.n_frames(samples.len()).ok_or(Error::InputTooShort { needed: win, got: samples.len() })?;
    let window = hann_window(win);
    let mut data = Vec::with_capacity(frames * win);
    for f in 0..frames {
        let seg = &samples[f * hop..f * hop + win];
        data.extend(seg.iter().zip(&window).map(|(&s, &w)| (s as f64 * w) as f32));
    }
    FeatureMap::from_vec(&[frames, win], data)
}

/// One-sided power spectrum of each row, zero-padded to `n_fft`:
/// `[frames, n_fft / 2 + 1]`.
pub fn power_spectrum(frames: &FeatureMap, n_fft: usize) -> Result<FeatureMap> {
    let (rows, cols) = match frames.shape() {
        [r, c] => (*r, *c),
        s => return Err(Error::ShapeMismatch(format!("expected [frames, len], got {s:?}"))),
    };
    if cols > n_fft {
        return Err(Error::ShapeMismatch(format!("frame length {cols} exceeds n_fft {n_fft}")));
    }
    let fft = Fft::new(n_fft);
    let bins = n_fft / 2 + 1;
    let (mut re, mut im) = (vec![0.0; n_fft], vec![0.0; n_fft]);
    let mut buf = vec![0.0; bins];
    let mut frame = vec![0.0; cols];
    let mut out = Vec::with_capacity(rows * bins);
    for r in 0..rows {
        for (d, &s) in frame.iter_mut().zip(&frames.data()[r * cols..(r + 1) * cols]) {
            *d = s as f64;
        }
        fft.power(&frame, &mut re, &mut im, &mut buf);
        out.extend(buf.iter().map(|&p| p as f32));
    }
    FeatureMap::from_vec(&[rows, bins], out)
}

/// Triangle `i` rises from edge `i` to a peak of 1 at edge `i + 1` and
/// falls back to 0 at edge `i + 2`; `n_filters + 2` edges span
/// `[f_min, f_max]` uniformly.
fn filter_weight(edges: &[f64], i: usize, f: f64) -> f64 {
    let (lo, mid, hi) = (edges[i], edges[i + 1], edges[i + 2]);
    let rise = (f - lo) / (mid - lo);
    let fall = (hi - f) / (hi - mid);
    rise.min(fall).max(0.0)
}

fn filter_edges(cfg: &LfccConfig) -> Vec<f64> {
    let n = cfg.n_filters + 2;
    (0..n).map(|i| cfg.f_min + (cfg.f_max - cfg.f_min) * i as f64 / (n - 1) as f64).collect()
}

fn bin_freq(cfg: &LfccConfig, k: usize) -> f64 {
    k as f64 * cfg.sample_rate as f64 / cfg.n_fft as f64
}

/// Dense filterbank matrix `[n_filters, n_fft / 2 + 1]`.
pub fn linear_filterbank(cfg: &LfccConfig) -> Result<FeatureMap> {
    cfg.validate()?;
    let edges = filter_edges(cfg);
    let bins = cfg.n_bins();
    let mut data = Vec::with_capacity(cfg.n_filters * bins);
    for i in 0..cfg.n_filters {
        data.extend((0..bins).map(|k| filter_weight(&edges, i, bin_freq(cfg, k)) as f32));
    }
    FeatureMap::from_vec(&[cfg.n_filters, bins], data)
}

/// Reusable extractor: window, filterbank and DCT basis built once and
/// shared read-only.
pub struct Lfcc {
    cfg: LfccConfig,
    fft: Fft,
    window: Vec<f64>,
    /// Per filter: first non-zero bin and its weights.
    filters: Vec<(usize, Vec<f64>)>,
    /// Row-major `[n_lfcc, n_filters]`.
    dct: Vec<f64>,
}

impl Lfcc {
    pub fn new(cfg: LfccConfig) -> Result<Self> {
        cfg.validate()?;
        let edges = filter_edges(&cfg);
        let filters = (0..cfg.n_filters)
            .map(|i| {
                let w: Vec<(usize, f64)> = (0..cfg.n_bins())
                    .map(|k| (k, filter_weight(&edges, i, bin_freq(&cfg, k))))
                    .filter(|&(_, w)| w > 0.0)
                    .collect();
                let start = w.first().map_or(0, |&(k, _)| k);
                (start, w.into_iter().map(|(_, v)| v).collect())
            })
            .collect();
        let m = cfg.n_filters;
        let mut dct = Vec::with_capacity(cfg.n_lfcc * m);
        for k in 0..cfg.n_lfcc {
            let scale = if k == 0 { (1.0 / m as f64).sqrt() } else { (2.0 / m as f64).sqrt() };
            dct.extend((0..m).map(|n| scale * (PI * k as f64 * (2 * n + 1) as f64 / (2 * m) as f64).cos()));
        }
        Ok(Self { fft: Fft::new(cfg.n_fft), window: hann_window(cfg.win_len()), cfg, filters, dct })
    }

    pub fn config(&self) -> &LfccConfig {
        &self.cfg
    }

    /// `[1, n_lfcc, frames]` coefficient map of one waveform.
    pub fn compute(&self, samples: &[f32]) -> Result<FeatureMap> {
        let cfg = &self.cfg;
        let (win, hop) = (cfg.win_len(), cfg.hop_len());
        let frames = cfg.n_frames(samples.len()).ok_or(Error::InputTooShort { needed: win, got: samples.len() })?;
        let (n, m, c) = (cfg.n_fft, cfg.n_filters, cfg.n_lfcc);
        let (mut re, mut im) = (vec![0.0; n], vec![0.0; n]);
        let mut frame = vec![0.0; win];
        let mut power = vec![0.0; cfg.n_bins()];
        let mut logs = vec![0.0; m];
        let mut out = vec![0.0f32; c * frames];
        for f in 0..frames {
            for ((d, &s), &w) in frame.iter_mut().zip(&samples[f * hop..f * hop + win]).zip(&self.window) {
                *d = s as f64 * w;
            }
            self.fft.power(&frame, &mut re, &mut im, &mut power);
            for (l, (start, w)) in logs.iter_mut().zip(&self.filters) {
                let e: f64 = w.iter().zip(&power[*start..]).map(|(a, b)| a * b).sum();
                *l = e.max(cfg.log_floor).ln();
            }
            for k in 0..c {
                let row = &self.dct[k * m..(k + 1) * m];
                let v: f64 = row.iter().zip(&logs).map(|(a, b)| a * b).sum();
                out[k * frames + f] = v as f32;
            }
        }
        FeatureMap::from_vec(&[1, c, frames], out)
    }
}

/// One-shot LFCC extraction; prefer [`Lfcc`] when processing many clips.
pub fn lfcc(samples: &[f32], cfg: &LfccConfig) -> Result<FeatureMap> {
    Lfcc::new(*cfg)?.compute(samples)
}
