//! RIFF/WAVE decoding into mono [`AudioClip`]s.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use specrnet_core::audio::{to_mono, AudioClip};

use crate::{Error, Result};

/// Reads a PCM16 or float32 WAV with one or two channels. PCM is scaled by
/// 1/32768 and stereo is averaged to mono; the sample rate is kept.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::read(path, e))?;
    decode_wav(&bytes, path)
}

/// Like [`load_wav`] on an in-memory file; `path` only labels errors.
pub fn decode_wav(bytes: &[u8], path: &Path) -> Result<AudioClip> {
    let malformed = |reason: String| Error::MalformedWav { path: path.to_path_buf(), reason };
    let unsupported = |reason: String| Error::UnsupportedEncoding { path: path.to_path_buf(), reason };
    let classify = |e: hound::Error| match e {
        hound::Error::Unsupported => unsupported("codec not handled by the decoder".into()),
        other => malformed(other.to_string()),
    };
    let reader = WavReader::new(Cursor::new(bytes)).map_err(classify)?;
    let spec = reader.spec();
    if !(1..=2).contains(&spec.channels) {
        return Err(unsupported(format!("{} channels", spec.channels)));
    }
    if spec.sample_rate == 0 {
        return Err(malformed("sample rate 0".into()));
    }
    let interleaved = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => read_all(reader, |s: i16| s as f32 / 32768.0).map_err(classify)?,
        (SampleFormat::Float, 32) => read_all(reader, |s: f32| s).map_err(classify)?,
        (format, bits) => return Err(unsupported(format!("{bits}-bit {format:?}"))),
    };
    if interleaved.len() % spec.channels as usize != 0 {
        return Err(malformed("sample count is not a multiple of the channel count".into()));
    }
    Ok(AudioClip::new(to_mono(&interleaved, spec.channels as usize), spec.sample_rate))
}

fn read_all<R: Read, S: hound::Sample>(mut reader: WavReader<R>, f: impl Fn(S) -> f32) -> hound::Result<Vec<f32>> {
    reader.samples::<S>().map(|s| s.map(&f)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

/// Writes interleaved samples; PCM16 output is rounded and clamped.
pub fn write_wav(
    path: impl AsRef<Path>,
    interleaved: &[f32],
    channels: u16,
    sample_rate: u32,
    encoding: WavEncoding,
) -> Result<()> {
    let path = path.as_ref();
    let (bits, format) = match encoding {
        WavEncoding::Pcm16 => (16, SampleFormat::Int),
        WavEncoding::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec { channels, sample_rate, bits_per_sample: bits, sample_format: format };
    let io = |e: hound::Error| match e {
        hound::Error::IoError(e) => Error::io(path, e),
        other => Error::io(path, std::io::Error::other(other.to_string())),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut writer = WavWriter::create(path, spec).map_err(io)?;
    for &s in interleaved {
        match encoding {
            WavEncoding::Pcm16 => writer.write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16),
            WavEncoding::Float32 => writer.write_sample(s),
        }
        .map_err(io)?;
    }
    writer.finalize().map_err(io)
}
