//! A small, trivially separable corpus for smoke tests: harmonic tones
//! stand in for bona fide speech, band-limited noise for each attack.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::AttackLayout;
use crate::wav::{write_wav, WavEncoding};
use crate::Result;

pub const BONAFIDE_DIR: &str = "bonafide";

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub bonafide: usize,
    pub per_attack: usize,
    pub attacks: Vec<String>,
    /// Clip length in samples at `sample_rate`.
    pub len: usize,
    pub sample_rate: u32,
    pub seed: u64,
}

impl SyntheticCorpus {
    /// `n` attack tags `attack0..`.
    pub fn with_attacks(n: usize) -> Self {
        Self {
            bonafide: 8,
            per_attack: 4,
            attacks: (0..n).map(|i| format!("attack{i}")).collect(),
            len: 16_000,
            sample_rate: 16_000,
            seed: 0,
        }
    }

    /// Writes `root/<dir>/<i>.wav` (PCM16, mono) and returns the layout
    /// mapping each directory to its attack tag.
    pub fn write(&self, root: &Path) -> Result<AttackLayout> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut layout = AttackLayout::new();
        layout.insert(BONAFIDE_DIR.into(), "bonafide".into());
        for i in 0..self.bonafide {
            let clip = tone(&mut rng, self.len, self.sample_rate);
            write_wav(root.join(BONAFIDE_DIR).join(format!("{i:04}.wav")), &clip, 1, self.sample_rate, WavEncoding::Pcm16)?;
        }
        for (a, attack) in self.attacks.iter().enumerate() {
            layout.insert(attack.clone(), attack.clone());
            for i in 0..self.per_attack {
                let clip = noise(&mut rng, self.len, a);
                write_wav(root.join(attack).join(format!("{i:04}.wav")), &clip, 1, self.sample_rate, WavEncoding::Pcm16)?;
            }
        }
        Ok(layout)
    }
}

/// A few harmonics of a random fundamental with a slow vibrato.
fn tone(rng: &mut ChaCha8Rng, len: usize, rate: u32) -> Vec<f32> {
    let f0 = rng.random_range(110.0..260.0);
    let phase: f64 = rng.random_range(0.0..2.0 * PI);
    (0..len)
        .map(|i| {
            let t = i as f64 / rate as f64;
            let f = f0 * (1.0 + 0.02 * (2.0 * PI * 4.0 * t).sin());
            let v: f64 = (1..=4).map(|h| (2.0 * PI * f * h as f64 * t + phase).sin() / h as f64).sum();
            (0.3 * v) as f32
        })
        .collect()
}

/// White noise through a one-pole low-pass whose cutoff depends on the
/// attack index, so attacks differ from each other as well.
fn noise(rng: &mut ChaCha8Rng, len: usize, attack: usize) -> Vec<f32> {
    let alpha = 0.15 + 0.1 * (attack % 8) as f64;
    let mut y = 0.0;
    (0..len)
        .map(|_| {
            y += alpha * (rng.random_range(-1.0..1.0) - y);
            (0.4 * y / alpha.sqrt()).clamp(-1.0, 1.0) as f32
        })
        .collect()
}
