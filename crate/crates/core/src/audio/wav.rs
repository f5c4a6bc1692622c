use std::path::Path;

use super::{AudioClip, CANONICAL_SAMPLE_RATE};
use crate::error::{Error, Result};

/// Reads 16-bit PCM WAV, downmixes to mono and resamples to 16 kHz.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path)
        .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Audio(format!(
            "{}: expected 16-bit PCM, got {:?} {} bit",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    let channels = usize::from(spec.channels.max(1));
    let raw: Vec<i16> = reader
        .samples::<i16>()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
    let mono: Vec<f32> = raw
        .chunks(channels)
        .map(|ch| ch.iter().map(|&s| f32::from(s) / 32768.0).sum::<f32>() / ch.len() as f32)
        .collect();
    AudioClip::new(mono, spec.sample_rate)?.resample(CANONICAL_SAMPLE_RATE)
}

/// Writes a mono 16-bit PCM WAV at the clip's sample rate.
pub fn save_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wrap = |e: hound::Error| Error::Audio(format!("{}: {e}", path.display()));
    let mut writer = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &s in clip.samples() {
        let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(q).map_err(wrap)?;
    }
    writer.finalize().map_err(wrap)
}
