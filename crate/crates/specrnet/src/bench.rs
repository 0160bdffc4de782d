//! Inference latency per batch size.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use specrnet_core::audio::STANDARD_CLIP_LEN;
use specrnet_core::lfcc::Lfcc;
use specrnet_core::model::SpecRNet;
use specrnet_core::Tensor;

use crate::{Error, Result};

/// Frames of a standard-length clip.
pub const BENCH_FRAMES: usize = 402;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub batch_sizes: Vec<usize>,
    pub iterations: usize,
    pub warmup: usize,
    pub measure_lfcc: bool,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { batch_sizes: vec![1, 16, 32], iterations: 1000, warmup: 10, measure_lfcc: false, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub batch_size: usize,
    pub iterations: usize,
    pub mean_ms: f64,
    /// Population standard deviation of the per-iteration times.
    pub std_ms: f64,
    pub lfcc_mean_ms: Option<f64>,
}

impl BenchRow {
    pub fn per_sample_ms(&self) -> f64 {
        self.mean_ms / self.batch_size as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub device: String,
    pub rows: Vec<BenchRow>,
}

/// Times eval-mode inference on one seeded random `[B, 1, 80, 402]` batch
/// per batch size, after `warmup` untimed rounds. Iterations are
/// interleaved: each round times one call per batch size, so slow drift in
/// host speed affects every size alike. Runs on the calling thread and only
/// borrows the model.
pub fn bench_inference(model: &SpecRNet<f32>, cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.iterations == 0 || cfg.batch_sizes.is_empty() || cfg.batch_sizes.contains(&0) {
        return Err(Error::InvalidConfig("iterations and batch sizes must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let coeffs = model.config().input_coeffs;
    let inputs = cfg
        .batch_sizes
        .iter()
        .map(|&b| {
            let data = (0..b * coeffs * BENCH_FRAMES).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            Tensor::from_vec(&[b, 1, coeffs, BENCH_FRAMES], data)
        })
        .collect::<core::result::Result<Vec<_>, _>>()?;
    for _ in 0..cfg.warmup {
        for x in &inputs {
            std::hint::black_box(model.predict(x)?);
        }
    }
    let mut times = vec![Vec::with_capacity(cfg.iterations); inputs.len()];
    for _ in 0..cfg.iterations {
        for (x, t) in inputs.iter().zip(&mut times) {
            let start = Instant::now();
            std::hint::black_box(model.predict(x)?);
            t.push(start.elapsed().as_secs_f64() * 1e3);
        }
    }
    let mut rows = Vec::new();
    for (&b, t) in cfg.batch_sizes.iter().zip(&times) {
        let (mean_ms, std_ms) = mean_std(t);
        let lfcc_mean_ms = if cfg.measure_lfcc { Some(bench_lfcc(b, cfg, &mut rng)?) } else { None };
        log::info!("batch {b}: {mean_ms:.3} ms ({:.3} ms per sample)", mean_ms / b as f64);
        rows.push(BenchRow { batch_size: b, iterations: cfg.iterations, mean_ms, std_ms, lfcc_mean_ms });
    }
    Ok(BenchReport { device: device_label(), rows })
}

/// Mean time to extract LFCCs from `b` random standard-length waveforms.
fn bench_lfcc(b: usize, cfg: &BenchConfig, rng: &mut ChaCha8Rng) -> Result<f64> {
    let lfcc = Lfcc::new(Default::default())?;
    let waves: Vec<Vec<f32>> =
        (0..b).map(|_| (0..STANDARD_CLIP_LEN).map(|_| rng.random_range(-1.0f32..1.0)).collect()).collect();
    let run = || -> Result<()> {
        for w in &waves {
            std::hint::black_box(lfcc.compute(w)?);
        }
        Ok(())
    };
    for _ in 0..cfg.warmup {
        run()?;
    }
    Ok(mean_std(&time_iterations(cfg.iterations, run)?).0)
}

fn time_iterations(n: usize, mut f: impl FnMut() -> Result<()>) -> Result<Vec<f64>> {
    let mut times = Vec::with_capacity(n);
    for _ in 0..n {
        let t = Instant::now();
        f()?;
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    Ok(times)
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// CPU model name where the OS exposes it, else the architecture.
pub fn device_label() -> String {
    std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| s.lines().find(|l| l.starts_with("model name")).and_then(|l| l.split(':').nth(1)).map(|v| v.trim().to_string()))
        .map(|name| format!("cpu: {name}"))
        .unwrap_or_else(|| format!("cpu: {}", std::env::consts::ARCH))
}
