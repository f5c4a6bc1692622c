//! Audio loading and per-frame feature extraction.
//!
//! Features are produced by an [`AudioEncoder`] backend at the backend's own
//! frame rate and then resampled onto the motion frame grid with
//! [`align_to_frames`].

mod mel;
mod wav;

use std::path::Path;

pub use mel::{hz_to_mel, mel_to_hz, LogMelFilterbank, MelConfig};
pub use wav::{load_wav, save_wav};

use crate::container::{Container, NamedArray};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

pub const CANONICAL_SAMPLE_RATE: u32 = 16_000;

/// Mono PCM in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Audio("audio clip is empty".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Audio("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Audio("audio clip contains non-finite samples".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Number of motion frames this clip spans at `fps`.
    pub fn frame_count(&self, fps: f64) -> usize {
        (self.duration_seconds() * fps).round() as usize
    }

    /// Linear-interpolation resampling. Identity when the rate already matches.
    pub fn resample(&self, target_rate: u32) -> Result<Self> {
        if target_rate == self.sample_rate {
            return Ok(self.clone());
        }
        if target_rate == 0 {
            return Err(Error::Audio("target sample rate must be positive".into()));
        }
        let ratio = f64::from(self.sample_rate) / f64::from(target_rate);
        let out_len = ((self.samples.len() as f64) / ratio).round().max(1.0) as usize;
        let last = self.samples.len() - 1;
        let samples = (0..out_len)
            .map(|i| {
                let pos = i as f64 * ratio;
                let lo = (pos.floor() as usize).min(last);
                let hi = (lo + 1).min(last);
                let frac = (pos - lo as f64) as f32;
                self.samples[lo] * (1.0 - frac) + self.samples[hi] * frac
            })
            .collect();
        Self::new(samples, target_rate)
    }
}

/// `T_a x d_a` features sampled at `frame_rate` Hz.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioFeatureSequence<T> {
    features: Matrix<T>,
    frame_rate: f64,
}

impl<T: Scalar> AudioFeatureSequence<T> {
    pub fn new(features: Matrix<T>, frame_rate: f64) -> Result<Self> {
        if features.rows() == 0 || features.cols() == 0 {
            return Err(Error::validation("feature sequence must be non-empty"));
        }
        if !features.is_finite() {
            return Err(Error::validation("feature sequence contains non-finite values"));
        }
        if !(frame_rate > 0.0) {
            return Err(Error::validation("feature frame rate must be positive"));
        }
        Ok(Self {
            features,
            frame_rate,
        })
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

/// Pluggable speech encoder. Implementations must be deterministic in their
/// inputs; a handle is shared across threads only if it is `Sync`.
pub trait AudioEncoder<T: Scalar> {
    fn feature_dim(&self) -> usize;

    fn encode(&self, clip: &AudioClip) -> Result<AudioFeatureSequence<T>>;
}

/// Adapter slot for an externally hosted pretrained speech encoder.
///
/// The wrapped closure receives the clip resampled to 16 kHz and must return
/// a `T_a x feature_dim` matrix at `frame_rate` Hz.
pub struct ExternalEncoder<F> {
    feature_dim: usize,
    frame_rate: f64,
    run: F,
}

impl<F> ExternalEncoder<F> {
    pub fn new(feature_dim: usize, frame_rate: f64, run: F) -> Self {
        Self {
            feature_dim,
            frame_rate,
            run,
        }
    }
}

impl<T, F> AudioEncoder<T> for ExternalEncoder<F>
where
    T: Scalar,
    F: Fn(&AudioClip) -> Result<Matrix<T>>,
{
    fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn encode(&self, clip: &AudioClip) -> Result<AudioFeatureSequence<T>> {
        let clip = clip.resample(CANONICAL_SAMPLE_RATE)?;
        let features = (self.run)(&clip)?;
        if features.cols() != self.feature_dim {
            return Err(Error::dims("external encoder output", self.feature_dim, features.cols()));
        }
        AudioFeatureSequence::new(features, self.frame_rate)
    }
}

pub fn extract_features<T: Scalar, E: AudioEncoder<T> + ?Sized>(
    clip: &AudioClip,
    backend: &E,
) -> Result<AudioFeatureSequence<T>> {
    backend.encode(clip)
}

/// Linearly resamples feature rows onto `target_frames` evenly spaced
/// positions whose endpoints coincide with the first and last input rows.
pub fn align_to_frames<T: Scalar>(
    feat: &AudioFeatureSequence<T>,
    target_frames: usize,
) -> Result<Matrix<T>> {
    align_rows(feat.features(), target_frames)
}

pub(crate) fn align_rows<T: Scalar>(src: &Matrix<T>, target_frames: usize) -> Result<Matrix<T>> {
    let n_in = src.rows();
    if n_in == 0 {
        return Err(Error::validation("cannot align an empty feature sequence"));
    }
    if target_frames == 0 {
        return Err(Error::validation("target frame count must be at least 1"));
    }
    if n_in == target_frames {
        return Ok(src.clone());
    }
    let dim = src.cols();
    let mut out = Matrix::zeros(target_frames, dim);
    for t in 0..target_frames {
        let pos = if target_frames == 1 {
            (n_in - 1) as f64 / 2.0
        } else {
            (t * (n_in - 1)) as f64 / (target_frames - 1) as f64
        };
        let lo = (pos.floor() as usize).min(n_in - 1);
        let frac = pos - lo as f64;
        let row = out.row_mut(t);
        if frac == 0.0 || lo + 1 >= n_in {
            row.copy_from_slice(src.row(lo));
        } else {
            let w_hi = T::of(frac);
            let w_lo = T::one() - w_hi;
            for ((o, &a), &b) in row.iter_mut().zip(src.row(lo)).zip(src.row(lo + 1)) {
                *o = a * w_lo + b * w_hi;
            }
        }
    }
    Ok(out)
}

const FEATURE_KIND: &str = "features";

pub fn save_features<T: Scalar>(path: impl AsRef<Path>, feat: &AudioFeatureSequence<T>) -> Result<()> {
    let m = feat.features();
    let mut c = Container::new(FEATURE_KIND)
        .with_meta("frame_rate", feat.frame_rate())
        .with_meta("frames", m.rows())
        .with_meta("dims", m.cols());
    c.push_array(NamedArray::new(
        "features",
        m.rows(),
        m.cols(),
        m.as_slice().iter().map(|v| v.to_f32_lossy()).collect(),
    ));
    c.write(path)
}

pub fn load_features<T: Scalar>(path: impl AsRef<Path>) -> Result<AudioFeatureSequence<T>> {
    let c = Container::read(path)?;
    c.expect_kind(FEATURE_KIND)?;
    let frames: usize = c.meta("frames")?;
    let dims: usize = c.meta("dims")?;
    let arr = c.expect_array("features", frames, dims)?;
    AudioFeatureSequence::new(
        Matrix::from_vec(
            frames,
            dims,
            arr.data.iter().map(|&v| T::from_f32_lossy(v)).collect(),
        ),
        c.meta("frame_rate")?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_length_alignment_is_identity() {
        let m = Matrix::from_fn(5, 3, |r, c| (r * 3 + c) as f64 * 0.7);
        let f = AudioFeatureSequence::new(m.clone(), 50.0).unwrap();
        assert_eq!(align_to_frames(&f, 5).unwrap(), m);
    }

    #[test]
    fn two_rows_to_three_inserts_midpoint() {
        let m = Matrix::from_rows(&[vec![0.0, 2.0], vec![4.0, -2.0]]);
        let f = AudioFeatureSequence::new(m, 50.0).unwrap();
        let out = align_to_frames(&f, 3).unwrap();
        assert_eq!(out, Matrix::from_rows(&[vec![0.0, 2.0], vec![2.0, 0.0], vec![4.0, -2.0]]));
    }

    #[test]
    fn alignment_rejects_zero_targets() {
        let f = AudioFeatureSequence::new(Matrix::<f32>::filled(2, 2, 1.0), 50.0).unwrap();
        assert!(align_to_frames(&f, 0).is_err());
        assert!(align_rows(&Matrix::<f32>::zeros(0, 2), 4).is_err());
    }

    #[test]
    fn eight_seconds_map_to_240_frames() {
        let clip = AudioClip::new(vec![0.0; 8 * 16_000], 16_000).unwrap();
        let fb = LogMelFilterbank::default();
        let feat: AudioFeatureSequence<f32> = extract_features(&clip, &fb).unwrap();
        let aligned = align_to_frames(&feat, clip.frame_count(30.0)).unwrap();
        assert_eq!(aligned.rows(), 240);
    }

    #[test]
    fn empty_and_zero_rate_clips_are_rejected() {
        assert!(AudioClip::new(vec![], 16_000).is_err());
        assert!(AudioClip::new(vec![0.0], 0).is_err());
    }

    #[test]
    fn external_encoder_checks_declared_width() {
        let enc = ExternalEncoder::new(4, 50.0, |_: &AudioClip| Ok(Matrix::<f32>::zeros(3, 5)));
        let clip = AudioClip::new(vec![0.0; 160], 16_000).unwrap();
        assert!(extract_features::<f32, _>(&clip, &enc).is_err());
    }

    #[test]
    fn feature_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.feat");
        let f = AudioFeatureSequence::new(Matrix::from_fn(7, 3, |r, c| r as f32 - c as f32 * 0.25), 100.0).unwrap();
        save_features(&path, &f).unwrap();
        assert_eq!(load_features::<f32>(&path).unwrap(), f);
    }

    proptest! {
        #[test]
        fn alignment_stays_within_column_bounds(
            rows in 1usize..12,
            target in 1usize..40,
            seed in proptest::collection::vec(-5.0f64..5.0, 36),
        ) {
            let m = Matrix::from_fn(rows, 3, |r, c| seed[(r * 3 + c) % seed.len()]);
            let f = AudioFeatureSequence::new(m.clone(), 50.0).unwrap();
            let out = align_to_frames(&f, target).unwrap();
            prop_assert_eq!(out.rows(), target);
            for c in 0..3 {
                let lo = (0..rows).map(|r| m[(r, c)]).fold(f64::INFINITY, f64::min);
                let hi = (0..rows).map(|r| m[(r, c)]).fold(f64::NEG_INFINITY, f64::max);
                for r in 0..target {
                    prop_assert!(out[(r, c)] >= lo - 1e-12 && out[(r, c)] <= hi + 1e-12);
                }
            }
        }

        #[test]
        fn alignment_preserves_constants(rows in 1usize..10, target in 1usize..50, v in -3.0f64..3.0) {
            let f = AudioFeatureSequence::new(Matrix::filled(rows, 2, v), 50.0).unwrap();
            let out = align_to_frames(&f, target).unwrap();
            prop_assert!(out.as_slice().iter().all(|&x| (x - v).abs() <= 1e-12));
        }
    }
}
