//! Waveform preprocessing: channel mixdown, band-limited resampling,
//! long-silence shortening and fixed-length trimming/tiling.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::{Error, Result};

/// Clip length the network is dimensioned for (4.0375 s at 16 kHz).
pub const STANDARD_CLIP_LEN: usize = 64_600;
pub const TARGET_RATE: u32 = 16_000;
pub const MAX_SILENCE_S: f64 = 0.2;

const SILENCE_FRAME_S: f64 = 0.02;
const SILENCE_DB_BELOW_PEAK: f64 = 40.0;

/// Sinc zero crossings on each side of the kernel centre.
const RESAMPLE_ZERO_CROSSINGS: f64 = 32.0;
const RESAMPLE_CUTOFF: f64 = 0.9;
const KAISER_BETA: f64 = 8.6;
const MAX_PRECOMPUTED_PHASES: u64 = 4096;

/// Mono waveform in `[-1, 1]` with its sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Averages interleaved channels into one.
pub fn to_mono(interleaved: &[f32], channels: usize) -> Vec<f32> {
    if channels <= 1 {
        return interleaved.to_vec();
    }
    let scale = 1.0 / channels as f32;
    interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f32>() * scale)
        .collect()
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Normalised filter taps for one fractional phase. Tap `i` sits at input
/// offset `i - (TAPS/2 - 1)` from the floor of the output position.
fn phase_taps(frac: f64, cutoff: f64, out: &mut [f64]) {
    let half = (out.len() / 2) as f64;
    let i0_beta = bessel_i0(KAISER_BETA);
    let mut sum = 0.0;
    for (i, tap) in out.iter_mut().enumerate() {
        let d = i as f64 - (half - 1.0) - frac;
        let x = 2.0 * cutoff * d;
        let sinc = if x.abs() < 1e-12 {
            1.0
        } else {
            let px = core::f64::consts::PI * x;
            px.sin() / px
        };
        let r = d / half;
        let window = if r.abs() >= 1.0 { 0.0 } else { bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta };
        *tap = 2.0 * cutoff * sinc * window;
        sum += *tap;
    }
    if sum != 0.0 {
        out.iter_mut().for_each(|t| *t /= sum);
    }
}

/// Polyphase Kaiser-windowed sinc resampler, cut off at 0.9 of the lower
/// Nyquist frequency. Bit-identity when the rates already match.
pub fn resample(clip: &AudioClip, target_rate: u32) -> AudioClip {
    assert!(clip.sample_rate > 0 && target_rate > 0, "sample rates must be positive");
    if clip.sample_rate == target_rate {
        return clip.clone();
    }
    let src = clip.sample_rate as u64;
    let dst = target_rate as u64;
    let g = gcd(src, dst);
    let up = dst / g;
    let down = src / g;
    let len = clip.samples.len() as u64;
    let out_len = ((len * dst + src / 2) / src) as usize;
    // cycles per input sample
    let cutoff = RESAMPLE_CUTOFF * 0.5 * (src.min(dst) as f64) / src as f64;

    let n_taps = 2 * (RESAMPLE_ZERO_CROSSINGS / (2.0 * cutoff)).ceil() as usize;

    let table: Option<Vec<Vec<f64>>> = (up <= MAX_PRECOMPUTED_PHASES).then(|| {
        (0..up)
            .map(|p| {
                let mut taps = vec![0.0; n_taps];
                phase_taps(p as f64 / up as f64, cutoff, &mut taps);
                taps
            })
            .collect()
    });

    let input = &clip.samples;
    let offset = n_taps as i64 / 2 - 1;
    let mut scratch = vec![0.0; n_taps];
    let mut out = Vec::with_capacity(out_len);
    for j in 0..out_len as u64 {
        let pos = j * down;
        let base = (pos / up) as i64;
        let phase = pos % up;
        let taps = match &table {
            Some(t) => t[phase as usize].as_slice(),
            None => {
                phase_taps(phase as f64 / up as f64, cutoff, &mut scratch);
                scratch.as_slice()
            }
        };
        let mut acc = 0.0f64;
        for (i, &w) in taps.iter().enumerate() {
            let idx = base - offset + i as i64;
            if idx >= 0 && (idx as usize) < input.len() {
                acc += w * input[idx as usize] as f64;
            }
        }
        out.push(acc as f32);
    }
    AudioClip::new(out, target_rate)
}

fn frame_rms(frame: &[f32]) -> f64 {
    let energy: f64 = frame.iter().map(|&s| (s as f64) * (s as f64)).sum();
    (energy / frame.len() as f64).sqrt()
}

/// Shortens every run of silent 20 ms frames lasting longer than
/// `max_silence_s` to its leading `max_silence_s`. A frame is silent when its
/// RMS lies more than 40 dB below the loudest frame of the clip.
pub fn trim_silence(clip: &AudioClip, max_silence_s: f64) -> Result<AudioClip> {
    let rate = clip.sample_rate as f64;
    let frame_len = ((SILENCE_FRAME_S * rate).round() as usize).max(1);
    let keep = (max_silence_s * rate).round() as usize;
    let frames: Vec<&[f32]> = clip.samples.chunks(frame_len).collect();
    let rms: Vec<f64> = frames.iter().map(|f| frame_rms(f)).collect();
    let peak = rms.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::EmptyAfterTrim);
    }
    let threshold = peak * 10f64.powf(-SILENCE_DB_BELOW_PEAK / 20.0);

    let mut out = Vec::with_capacity(clip.samples.len());
    let mut i = 0;
    while i < frames.len() {
        if rms[i] >= threshold {
            out.extend_from_slice(frames[i]);
            i += 1;
            continue;
        }
        let start = i;
        while i < frames.len() && rms[i] < threshold {
            i += 1;
        }
        let run_start = start * frame_len;
        let run_end = (i * frame_len).min(clip.samples.len());
        let run = &clip.samples[run_start..run_end];
        out.extend_from_slice(&run[..run.len().min(keep)]);
    }
    Ok(AudioClip::new(out, clip.sample_rate))
}

/// Truncates to the first `target_len` samples, or tiles the clip end to
/// start until it reaches `target_len`.
pub fn normalize_length(clip: &AudioClip, target_len: usize) -> Result<AudioClip> {
    if clip.samples.is_empty() {
        return Err(Error::EmptyClip);
    }
    let samples = clip.samples.iter().copied().cycle().take(target_len).collect();
    Ok(AudioClip::new(samples, clip.sample_rate))
}

/// Resample to 16 kHz, shorten long silences, then trim or tile to `clip_len`.
pub fn preprocess(clip: &AudioClip, clip_len: usize) -> Result<AudioClip> {
    let resampled = resample(clip, TARGET_RATE);
    let trimmed = trim_silence(&resampled, MAX_SILENCE_S)?;
    normalize_length(&trimmed, clip_len)
}

/// Peak absolute amplitude; handy for sanity checks on decoded audio.
pub fn peak_abs(samples: &[f32]) -> f32 {
    samples.iter().fold(0.0f32, |m, &s| m.max(s.abs()))
}
