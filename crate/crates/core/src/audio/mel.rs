use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{AudioClip, AudioEncoder, AudioFeatureSequence, CANONICAL_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MelConfig {
    pub n_mels: usize,
    /// Analysis window length in samples (25 ms at 16 kHz).
    pub win_length: usize,
    /// Hop in samples (10 ms at 16 kHz).
    pub hop_length: usize,
    /// Zero-padded FFT size; must be at least `win_length`.
    pub n_fft: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Energies are clamped to this value before the logarithm.
    pub energy_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_mels: 80,
            win_length: 400,
            hop_length: 160,
            n_fft: 1024,
            f_min: 0.0,
            f_max: 8_000.0,
            energy_floor: 1e-10,
        }
    }
}

/// Deterministic log-mel backend: Hann window, power spectrum, triangular
/// HTK filters, natural log with an energy floor.
pub struct LogMelFilterbank {
    config: MelConfig,
    window: Vec<f64>,
    /// `n_mels x (n_fft / 2 + 1)` triangle weights.
    filters: Vec<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for LogMelFilterbank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LogMelFilterbank").field("config", &self.config).finish()
    }
}

impl Default for LogMelFilterbank {
    fn default() -> Self {
        Self::new(MelConfig::default()).expect("default mel config is valid")
    }
}

impl LogMelFilterbank {
    pub fn new(config: MelConfig) -> Result<Self> {
        if config.n_mels == 0 || config.win_length == 0 || config.hop_length == 0 {
            return Err(Error::validation("mel config sizes must be positive"));
        }
        if config.n_fft < config.win_length {
            return Err(Error::validation("n_fft must be at least the window length"));
        }
        if !(config.f_min >= 0.0 && config.f_max > config.f_min) {
            return Err(Error::validation("mel frequency range is empty"));
        }
        let window = (0..config.win_length)
            .map(|n| {
                0.5 - 0.5
                    * (2.0 * std::f64::consts::PI * n as f64 / config.win_length as f64).cos()
            })
            .collect();
        let filters = triangle_filters(&config, CANONICAL_SAMPLE_RATE);
        let fft = FftPlanner::new().plan_fft_forward(config.n_fft);
        Ok(Self {
            config,
            window,
            filters,
            fft,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    pub fn frame_rate(&self) -> f64 {
        f64::from(CANONICAL_SAMPLE_RATE) / self.config.hop_length as f64
    }

    pub fn filters(&self) -> &[Vec<f64>] {
        &self.filters
    }

    fn power_spectrum(&self, frame: &[f32]) -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.config.n_fft];
        for ((b, &s), &w) in buf.iter_mut().zip(frame).zip(&self.window) {
            b.re = f64::from(s) * w;
        }
        self.fft.process(&mut buf);
        buf[..self.config.n_fft / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr())
            .collect()
    }
}

fn triangle_filters(config: &MelConfig, sample_rate: u32) -> Vec<Vec<f64>> {
    let n_bins = config.n_fft / 2 + 1;
    let lo = hz_to_mel(config.f_min);
    let hi = hz_to_mel(config.f_max);
    let edges: Vec<f64> = (0..config.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (config.n_mels + 1) as f64))
        .collect();
    let bin_hz = f64::from(sample_rate) / config.n_fft as f64;
    (0..config.n_mels)
        .map(|m| {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let up = (f - left) / (center - left);
                    let down = (right - f) / (right - center);
                    up.min(down).max(0.0)
                })
                .collect()
        })
        .collect()
}

impl<T: Scalar> AudioEncoder<T> for LogMelFilterbank {
    fn feature_dim(&self) -> usize {
        self.config.n_mels
    }

    fn encode(&self, clip: &AudioClip) -> Result<AudioFeatureSequence<T>> {
        if clip.sample_rate() != CANONICAL_SAMPLE_RATE {
            return Err(Error::Audio(format!(
                "filterbank expects {CANONICAL_SAMPLE_RATE} Hz input, got {} Hz",
                clip.sample_rate()
            )));
        }
        let samples = clip.samples();
        let win = self.config.win_length;
        let hop = self.config.hop_length;
        let n_frames = if samples.len() <= win {
            1
        } else {
            1 + (samples.len() - win) / hop
        };
        let mut frame = vec![0.0f32; win];
        let mut out = Matrix::zeros(n_frames, self.config.n_mels);
        for i in 0..n_frames {
            let start = i * hop;
            let end = (start + win).min(samples.len());
            frame.fill(0.0);
            frame[..end - start].copy_from_slice(&samples[start..end]);
            let power = self.power_spectrum(&frame);
            for (o, filt) in out.row_mut(i).iter_mut().zip(&self.filters) {
                let e: f64 = filt.iter().zip(&power).map(|(w, p)| w * p).sum();
                *o = T::of(e.max(self.config.energy_floor).ln());
            }
        }
        AudioFeatureSequence::new(out, self.frame_rate())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::extract_features;

    fn tone(freq: f64, seconds: f64) -> AudioClip {
        let n = (seconds * 16_000.0) as usize;
        AudioClip::new(
            (0..n)
                .map(|i| (0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin()) as f32)
                .collect(),
            16_000,
        )
        .unwrap()
    }

    #[test]
    fn silence_gives_constant_floor() {
        let fb = LogMelFilterbank::default();
        let clip = AudioClip::new(vec![0.0; 16_000], 16_000).unwrap();
        let f: AudioFeatureSequence<f64> = extract_features(&clip, &fb).unwrap();
        let floor = 1e-10f64.ln();
        assert!(f.features().as_slice().iter().all(|&v| v == floor));
        assert_eq!(f.len(), 98);
    }

    /// Brute-force DFT + independently evaluated triangles; the argmax must
    /// be the filter whose passband contains 440 Hz.
    #[test]
    fn pure_tone_peaks_in_containing_mel_band() {
        let fb = LogMelFilterbank::default();
        let clip = tone(440.0, 1.0);
        let f: AudioFeatureSequence<f64> = extract_features(&clip, &fb).unwrap();
        let row = f.features().row(10);
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        let got = argmax(row);

        let n_fft = 1024;
        let frame = &clip.samples()[10 * 160..10 * 160 + 400];
        let power: Vec<f64> = (0..=n_fft / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, &s) in frame.iter().enumerate() {
                    let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / 400.0).cos();
                    let ang = -2.0 * std::f64::consts::PI * (k * n) as f64 / n_fft as f64;
                    re += f64::from(s) * w * ang.cos();
                    im += f64::from(s) * w * ang.sin();
                }
                re * re + im * im
            })
            .collect();
        let mel_hi = 2595.0 * (1.0 + 8000.0f64 / 700.0).log10();
        let edge = |i: usize| 700.0 * (10f64.powf(mel_hi * i as f64 / 81.0 / 2595.0) - 1.0);
        let energies: Vec<f64> = (0..80)
            .map(|m| {
                (0..=n_fft / 2)
                    .map(|k| {
                        let hz = k as f64 * 16_000.0 / n_fft as f64;
                        let w = ((hz - edge(m)) / (edge(m + 1) - edge(m)))
                            .min((edge(m + 2) - hz) / (edge(m + 2) - edge(m + 1)))
                            .max(0.0);
                        w * power[k]
                    })
                    .sum()
            })
            .collect();
        let expected = argmax(&energies);
        assert_eq!(got, expected);
        assert!(edge(got) < 440.0 && 440.0 < edge(got + 2));
        for (a, b) in row.iter().zip(&energies) {
            assert!((a - b.max(1e-10).ln()).abs() < 1e-6);
        }
    }

    #[test]
    fn identical_clips_give_identical_features() {
        let fb = LogMelFilterbank::default();
        let clip = tone(220.0, 0.5);
        let a: AudioFeatureSequence<f32> = extract_features(&clip, &fb).unwrap();
        let b: AudioFeatureSequence<f32> = extract_features(&clip.clone(), &fb).unwrap();
        let bits = |m: &Matrix<f32>| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a.features()), bits(b.features()));
    }

    #[test]
    fn rejects_non_canonical_rate() {
        let fb = LogMelFilterbank::default();
        let clip = AudioClip::new(vec![0.0; 4410], 44_100).unwrap();
        assert!(AudioEncoder::<f32>::encode(&fb, &clip).is_err());
    }

    #[test]
    fn every_filter_covers_at_least_one_bin() {
        let fb = LogMelFilterbank::default();
        assert!(fb.filters().iter().all(|f| f.iter().any(|&w| w > 0.0)));
    }
}
