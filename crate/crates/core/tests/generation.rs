use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use singer_core::audio::{self, AudioClip, AudioFeatureSequence, LogMelFilterbank};
use singer_core::cvae::{Cvae, ModelConfig};
use singer_core::generation::{generate, generate_aligned, prior_latent};
use singer_core::motion::{ShapeParams, SHAPE_DIM};
use singer_core::{Cvae32, Cvae64, Matrix};

fn config(d_audio: usize) -> ModelConfig {
    ModelConfig {
        d_model: 16,
        n_layers_enc: 1,
        n_layers_dec: 2,
        n_heads: 2,
        ppe_period: 30,
        d_audio,
        ff_dim: 32,
        mask_bandwidth: 0,
        init_seed: 3,
    }
}

fn tone(seconds: f64) -> AudioClip {
    let rate = 16_000;
    let samples = (0..(seconds * rate as f64) as usize)
        .map(|i| (0.3 * (std::f64::consts::TAU * 440.0 * i as f64 / rate as f64).sin()) as f32)
        .collect();
    AudioClip::new(samples, rate).unwrap()
}

#[test]
fn wav_to_motion_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("tone.wav");
    audio::save_wav(&wav, &tone(1.5)).unwrap();
    let clip = audio::load_wav(&wav).unwrap();

    let mel = LogMelFilterbank::default();
    let feats: AudioFeatureSequence<f32> = audio::extract_features(&clip, &mel).unwrap();
    let model = Cvae::<f32>::new(config(feats.dim())).unwrap();
    let samples = generate(&model, &clip, &ShapeParams::zeros(), 3, 11, &mel).unwrap();
    assert_eq!(samples.len(), 3);
    assert!(samples.iter().all(|s| s.len() == 45 && s.as_matrix().is_finite()));
    assert_ne!(samples[0], samples[1]);
}

#[test]
fn prior_streams_are_seeded_and_independent() {
    let a = prior_latent::<f64>(5, 0, 32);
    assert_eq!(a, prior_latent::<f64>(5, 0, 32));
    assert_ne!(a, prior_latent::<f64>(5, 1, 32));
    assert_ne!(a, prior_latent::<f64>(6, 0, 32));
    let mean = a.as_slice().iter().sum::<f64>() / 32.0;
    assert!(mean.abs() < 1.0);
}

#[test]
fn single_and_double_precision_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let small: Cvae32 = Cvae::new(config(6)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    small.save(&path).unwrap();
    let wide: Cvae64 = Cvae::load(&path).unwrap();

    let audio64 = Matrix::from_fn(20, 6, |_, _| rng.random_range(-1.0..1.0));
    let audio32 = audio64.cast::<f32>();
    let beta: Vec<f64> = (0..SHAPE_DIM).map(|_| rng.random_range(-0.5..0.5)).collect();
    let shape64 = ShapeParams::new(beta.clone()).unwrap();
    let shape32 = ShapeParams::new(beta.iter().map(|&b| b as f32).collect()).unwrap();

    let a = generate_aligned(&small, &audio32, &shape32, 2, 4).unwrap();
    let b = generate_aligned(&wide, &audio64, &shape64, 2, 4).unwrap();
    for (x, y) in a.iter().zip(&b) {
        let diff = x.as_matrix().cast::<f64>().max_abs_diff(y.as_matrix());
        assert!(diff < 1e-4, "f32 vs f64 decode differ by {diff}");
    }
}

#[test]
fn zero_samples_is_an_error() {
    let model = Cvae::<f32>::new(config(4)).unwrap();
    let audio = Matrix::zeros(5, 4);
    assert!(generate_aligned(&model, &audio, &ShapeParams::zeros(), 0, 1).is_err());
}
