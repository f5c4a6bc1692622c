//! Prior sampling: decode `n` latents drawn from `N(0, I)` for one
//! `(audio, shape)` pair.
//!
//! Latent `i` comes from a ChaCha stream keyed by `(seed, i)`, so asking for
//! more samples never changes the earlier ones.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::audio::{align_to_frames, AudioClip, AudioEncoder, AudioFeatureSequence};
use crate::cvae::{Cvae, LatentVector};
use crate::error::{Error, Result};
use crate::motion::{MotionSequence, ShapeParams, DEFAULT_FPS};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Standard-normal latent for sample `index` of the stream keyed by `seed`.
pub fn prior_latent<T: Scalar>(seed: u64, index: u64, dim: usize) -> LatentVector<T> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let z = (0..dim)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut rng);
            T::of(x)
        })
        .collect();
    LatentVector::new(z).expect("normal draws are finite")
}

/// Decodes each latent against the same conditioning. Order is preserved.
pub fn decode_latents<T: Scalar>(
    model: &Cvae<T>,
    latents: &[LatentVector<T>],
    shape: &ShapeParams<T>,
    audio: &Matrix<T>,
) -> Result<Vec<MotionSequence<T>>> {
    let frames = audio.rows();
    latents
        .par_iter()
        .map(|z| model.decode(z, shape, audio, frames))
        .collect()
}

/// `n` prior samples for audio features already aligned to `audio.rows()` frames.
pub fn generate_aligned<T: Scalar>(
    model: &Cvae<T>,
    audio: &Matrix<T>,
    shape: &ShapeParams<T>,
    n: usize,
    seed: u64,
) -> Result<Vec<MotionSequence<T>>> {
    if n == 0 {
        return Err(Error::validation("sample count must be at least 1"));
    }
    let latents: Vec<LatentVector<T>> = (0..n as u64)
        .map(|i| prior_latent(seed, i, model.latent_dim()))
        .collect();
    decode_latents(model, &latents, shape, audio)
}

/// Frame count for a clip at the motion frame rate; errors below one frame.
pub fn frames_for_clip(clip: &AudioClip) -> Result<usize> {
    let frames = clip.frame_count(DEFAULT_FPS);
    if frames == 0 {
        return Err(Error::validation(format!(
            "audio of {:.4} s is shorter than one motion frame",
            clip.duration_seconds()
        )));
    }
    Ok(frames)
}

/// End-to-end sampling from raw audio.
pub fn generate<T: Scalar, E: AudioEncoder<T> + ?Sized>(
    model: &Cvae<T>,
    clip: &AudioClip,
    shape: &ShapeParams<T>,
    n: usize,
    seed: u64,
    encoder: &E,
) -> Result<Vec<MotionSequence<T>>> {
    let frames = frames_for_clip(clip)?;
    let feats: AudioFeatureSequence<T> = encoder.encode(clip)?;
    let audio = align_to_frames(&feats, frames)?;
    generate_aligned(model, &audio, shape, n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::LogMelFilterbank;
    use crate::cvae::ModelConfig;

    fn model() -> Cvae<f32> {
        Cvae::new(ModelConfig {
            d_model: 16,
            n_layers_enc: 1,
            n_layers_dec: 1,
            n_heads: 2,
            ppe_period: 30,
            d_audio: 80,
            ff_dim: 32,
            mask_bandwidth: 0,
            init_seed: 2,
        })
        .unwrap()
    }

    fn clip(seconds: f64) -> AudioClip {
        let n = (seconds * 16_000.0) as usize;
        AudioClip::new((0..n).map(|i| ((i as f32) * 0.05).sin() * 0.3).collect(), 16_000).unwrap()
    }

    #[test]
    fn frame_count_follows_duration() {
        let out = generate(&model(), &clip(0.5), &ShapeParams::zeros(), 2, 1, &LogMelFilterbank::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|m| m.len() == 15));
    }

    #[test]
    fn same_seed_is_reproducible_and_nested() {
        let m = model();
        let audio = Matrix::from_fn(10, 80, |r, c| ((r + c) as f32 * 0.01).cos());
        let a = generate_aligned(&m, &audio, &ShapeParams::zeros(), 5, 7).unwrap();
        let b = generate_aligned(&m, &audio, &ShapeParams::zeros(), 10, 7).unwrap();
        assert_eq!(a[..], b[..5]);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn too_short_audio_is_rejected() {
        let tiny = AudioClip::new(vec![0.0; 100], 16_000).unwrap();
        assert!(generate(&model(), &tiny, &ShapeParams::zeros(), 1, 0, &LogMelFilterbank::default()).is_err());
        let audio = Matrix::zeros(4, 80);
        assert!(generate_aligned(&model(), &audio, &ShapeParams::zeros(), 0, 0).is_err());
    }
}
