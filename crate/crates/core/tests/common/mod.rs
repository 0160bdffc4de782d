//! Independent reference implementations shared by the integration tests
//! and the acceptance runner. Deliberately naive: direct sums, no reuse of
//! library internals.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specrnet_core::lfcc::LfccConfig;
use specrnet_core::manifest::Label;
use specrnet_core::model::{SpecRNet, STAGES};
use specrnet_core::nn::Mode;
use specrnet_core::{Scalar, Tensor};

/// `|DFT(x zero-padded to n)|^2` for bins `0..=n/2`, by direct summation.
pub fn dft_power(x: &[f64], n: usize) -> Vec<f64> {
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let ang = -2.0 * PI * (k * t) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            re * re + im * im
        })
        .collect()
}

fn triangle(f: f64, lo: f64, mid: f64, hi: f64) -> f64 {
    if f >= lo && f <= mid && mid > lo {
        (f - lo) / (mid - lo)
    } else if f > mid && f <= hi && hi > mid {
        (hi - f) / (hi - mid)
    } else {
        0.0
    }
}

/// LFCC coefficients as `[coefficient][frame]`.
pub fn lfcc_reference(samples: &[f32], cfg: &LfccConfig) -> Vec<Vec<f64>> {
    let win = cfg.sample_rate as usize * cfg.win_ms as usize / 1000;
    let hop = cfg.sample_rate as usize * cfg.hop_ms as usize / 1000;
    let frames = 1 + (samples.len() - win) / hop;
    let m = cfg.n_filters;
    let edges: Vec<f64> = (0..m + 2).map(|i| cfg.f_min + (cfg.f_max - cfg.f_min) * i as f64 / (m + 1) as f64).collect();
    let mut out = vec![vec![0.0; frames]; cfg.n_lfcc];
    for f in 0..frames {
        let frame: Vec<f64> = (0..win)
            .map(|n| samples[f * hop + n] as f64 * (0.5 - 0.5 * (2.0 * PI * n as f64 / win as f64).cos()))
            .collect();
        let power = dft_power(&frame, cfg.n_fft);
        let logs: Vec<f64> = (0..m)
            .map(|i| {
                let e: f64 = power
                    .iter()
                    .enumerate()
                    .map(|(k, p)| {
                        let hz = k as f64 * cfg.sample_rate as f64 / cfg.n_fft as f64;
                        p * triangle(hz, edges[i], edges[i + 1], edges[i + 2])
                    })
                    .sum();
                e.max(cfg.log_floor).ln()
            })
            .collect();
        for (k, row) in out.iter_mut().enumerate() {
            let scale = if k == 0 { (1.0 / m as f64).sqrt() } else { (2.0 / m as f64).sqrt() };
            let c: f64 = logs.iter().enumerate().map(|(i, v)| v * (PI * k as f64 * (i as f64 + 0.5) / m as f64).cos()).sum();
            row[f] = scale * c;
        }
    }
    out
}

/// `100 * P(fake > bonafide) + 50 * P(tie)` over all pairs.
pub fn mann_whitney(scores: &[f64], labels: &[Label]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &a) in scores.iter().enumerate() {
        for (j, &b) in scores.iter().enumerate() {
            if labels[i] == Label::Fake && labels[j] == Label::Bonafide {
                pairs += 1.0;
                if a > b {
                    wins += 1.0;
                } else if a == b {
                    wins += 0.5;
                }
            }
        }
    }
    100.0 * wins / pairs
}

/// EER by counting errors at every candidate threshold, then interpolating
/// linearly between the last threshold with FAR < FRR and the first with
/// FAR >= FRR.
pub fn brute_eer(scores: &[f64], labels: &[Label]) -> f64 {
    let mut ts: Vec<f64> = scores.to_vec();
    ts.push(f64::INFINITY);
    ts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ts.dedup();
    let nb = labels.iter().filter(|&&l| l == Label::Bonafide).count() as f64;
    let nf = labels.len() as f64 - nb;
    let rates: Vec<(f64, f64)> = ts
        .iter()
        .map(|&t| {
            let mut far = 0.0;
            let mut frr = 0.0;
            for (s, l) in scores.iter().zip(labels) {
                match l {
                    Label::Bonafide if *s >= t => far += 1.0,
                    Label::Fake if *s < t => frr += 1.0,
                    _ => {}
                }
            }
            (far / nb, frr / nf)
        })
        .collect();
    for i in 0..rates.len() {
        let (far, frr) = rates[i];
        if far >= frr {
            if far == frr || i == 0 {
                return 100.0 * far;
            }
            let (pfar, pfrr) = rates[i - 1];
            // Solve pfar + a (far - pfar) = pfrr + a (frr - pfrr).
            let a = (pfrr - pfar) / ((far - pfar) - (frr - pfrr));
            return 100.0 * (pfar + a * (far - pfar));
        }
    }
    unreachable!("FRR reaches zero at the lowest threshold")
}

/// Random scored set with both classes; half of the sets use coarse scores
/// so ties are common.
pub fn random_scored_set(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<Label>) {
    loop {
        let n = rng.random_range(2..80);
        let coarse = rng.random_bool(0.5);
        let scores: Vec<f64> =
            (0..n).map(|_| if coarse { rng.random_range(0..8) as f64 / 7.0 } else { rng.random::<f64>() }).collect();
        let labels: Vec<Label> =
            (0..n).map(|_| if rng.random_bool(0.4) { Label::Fake } else { Label::Bonafide }).collect();
        if labels.contains(&Label::Fake) && labels.contains(&Label::Bonafide) {
            return (scores, labels);
        }
    }
}

/// One sampled parameter entry with its reference derivative.
pub struct Probe {
    pub param: usize,
    pub index: usize,
    pub name: String,
    pub numeric: f64,
}

/// Central differences of `L = sum(scores)` in precision `R`, for
/// `per_tensor` randomly drawn entries of every trainable tensor. Activations
/// in front of the perturbed parameter's stage are computed once and reused.
pub fn reference_gradients<R: Scalar>(
    model: &SpecRNet<f64>,
    x: &Tensor<f64>,
    mode: Mode,
    per_tensor: usize,
    step: f64,
    seed: u64,
) -> Vec<Probe> {
    let reference = model.cast::<R>();
    let mut acts = vec![x.cast::<R>()];
    for i in 0..STAGES.len() {
        let next = reference.stage(i, acts.last().unwrap(), mode).expect("stage");
        acts.push(next);
    }
    let loss_from = |net: &SpecRNet<R>, start: usize| -> R {
        let mut a = acts[start].clone();
        for i in start..STAGES.len() {
            a = net.stage(i, &a, mode).expect("stage");
        }
        a.data().iter().fold(R::zero(), |s, &v| s + v)
    };
    let h = R::from_f64(step);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = Vec::new();
    let names: Vec<(String, usize, bool)> =
        reference.params().iter().map(|p| (p.name.clone(), p.numel(), p.trainable)).collect();
    for (pi, (name, n, trainable)) in names.into_iter().enumerate() {
        if !trainable {
            continue;
        }
        let start = SpecRNet::<R>::stage_of(&name);
        let picks: Vec<usize> =
            if n <= per_tensor { (0..n).collect() } else { (0..per_tensor).map(|_| rng.random_range(0..n)).collect() };
        for index in picks {
            let shifted = |delta: R| {
                let mut net = reference.clone();
                {
                    let mut ps = net.params_mut();
                    let v = &mut ps[pi].value.data_mut()[index];
                    *v = *v + delta;
                }
                loss_from(&net, start)
            };
            let numeric = ((shifted(h) - shifted(-h)) / (h + h)).as_f64();
            probes.push(Probe { param: pi, index, name: format!("{name}[{index}]"), numeric });
        }
    }
    probes
}

/// Analytic gradients of `L = sum(scores)` for every parameter tensor.
pub fn analytic_gradients<T: Scalar>(model: &SpecRNet<T>, x: &Tensor<f64>, mode: Mode) -> Vec<Vec<f64>> {
    let mut m = model.clone();
    m.zero_grad();
    let scores = m.forward(&x.cast::<T>(), mode).expect("forward");
    m.backward(&Tensor::full(scores.shape(), T::one())).expect("backward");
    m.params().iter().map(|p| p.grad.data().iter().map(|g| g.as_f64()).collect()).collect()
}

/// Denominator floors relative to the largest sampled gradient, so entries
/// that are structurally zero (a bias feeding a train-mode batch norm) are
/// judged against the rounding noise of the precision under test.
pub const F64_FLOOR: f64 = 1e-9;
pub const F32_FLOOR: f64 = 1e-6;

pub fn max_abs(probes: &[Probe]) -> f64 {
    probes.iter().map(|p| p.numeric.abs()).fold(0.0, f64::max)
}

pub struct GradCheck {
    pub checked: usize,
    pub passed: usize,
    pub max_rel: f64,
    pub worst: String,
}

/// `rel = |a - n| / max(|a|, |n|, floor)`, and 0 when both are exactly 0.
pub fn compare(probes: &[Probe], analytic: &[Vec<f64>], floor: f64, tolerance: f64) -> GradCheck {
    let mut report = GradCheck { checked: 0, passed: 0, max_rel: 0.0, worst: String::new() };
    for p in probes {
        let a = analytic[p.param][p.index];
        let denom = a.abs().max(p.numeric.abs()).max(floor);
        let rel = if denom == 0.0 { 0.0 } else { (a - p.numeric).abs() / denom };
        report.checked += 1;
        if rel < tolerance {
            report.passed += 1;
        }
        if rel >= report.max_rel {
            report.max_rel = rel;
            report.worst = format!("{}: analytic {a:e}, numeric {:e}", p.name, p.numeric);
        }
    }
    report
}

pub fn random_input(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}
