use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;
use singer_core::audio::{self, AudioFeatureSequence, LogMelFilterbank};
use singer_core::cvae::{Cvae, ModelConfig};
use singer_core::generation::{self, frames_for_clip};
use singer_core::motion::{self, ShapeParams, DEFAULT_FPS};
use singer_core::training::{TrainConfig, Trainer, TrainingExample};
use singer_core::Matrix;

use crate::io::{out_dir, read_json, relative_to, shown, write_manifest};
use crate::usage;

#[derive(Args)]
pub struct FeaturesArgs {
    /// 16-bit PCM WAV input.
    #[arg(long)]
    audio: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Log-mel features resampled onto the motion frame grid of the clip.
fn aligned_features(clip: &audio::AudioClip) -> Result<Matrix<f32>> {
    let frames = frames_for_clip(clip)?;
    let feats: AudioFeatureSequence<f32> = audio::extract_features(clip, &LogMelFilterbank::default())?;
    Ok(audio::align_to_frames(&feats, frames)?)
}

pub fn features(a: FeaturesArgs) -> Result<()> {
    let clip = audio::load_wav(&a.audio)?;
    let aligned = aligned_features(&clip)?;
    let dir = out_dir(&a.out)?;
    let seq = AudioFeatureSequence::new(aligned, DEFAULT_FPS)?;
    audio::save_features(dir.join("features.bin"), &seq)?;
    write_manifest(
        &dir,
        "features",
        json!({
            "config": { "audio": shown(&a.audio), "encoder": "log-mel", "frame_rate": DEFAULT_FPS },
            "duration_seconds": clip.duration_seconds(),
            "frames": seq.len(),
            "dims": seq.dim(),
            "outputs": ["features.bin"],
        }),
    )
}

/// Optional TOML file: `[train]` and `[model]` tables.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    train: TrainConfig,
    model: ModelConfig,
}

#[derive(Deserialize)]
struct ExampleEntry {
    features: PathBuf,
    motion: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    /// JSON array of `{features, motion}` pairs, paths relative to this file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// TOML config; command-line flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda_r: Option<f64>,
    #[arg(long)]
    lambda_v: Option<f64>,
    #[arg(long)]
    lambda_k: Option<f64>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    layers_enc: Option<usize>,
    #[arg(long)]
    layers_dec: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    ff_dim: Option<usize>,
    #[arg(long)]
    ppe_period: Option<usize>,
}

fn resolve_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| singer_core::Error::io(path, e))?;
            toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    // One seed drives both initialization and the training streams.
    cfg.model.init_seed = a.seed;
    let t = &mut cfg.train;
    t.seed = a.seed;
    macro_rules! set {
        ($dst:expr, $src:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    set!(t.epochs, a.epochs);
    set!(t.batch_size, a.batch_size);
    set!(t.lr, a.lr);
    set!(t.lambda_r, a.lambda_r);
    set!(t.lambda_v, a.lambda_v);
    set!(t.lambda_k, a.lambda_k);
    set!(t.checkpoint_every, a.checkpoint_every);
    let m = &mut cfg.model;
    set!(m.d_model, a.d_model);
    set!(m.n_layers_enc, a.layers_enc);
    set!(m.n_layers_dec, a.layers_dec);
    set!(m.n_heads, a.heads);
    set!(m.ff_dim, a.ff_dim);
    set!(m.ppe_period, a.ppe_period);
    Ok(cfg)
}

fn load_examples(list: &Path) -> Result<Vec<TrainingExample<f32>>> {
    let entries: Vec<ExampleEntry> = read_json(list)?;
    if entries.is_empty() {
        return Err(singer_core::Error::validation("training list is empty").into());
    }
    entries
        .iter()
        .map(|e| {
            let feats: AudioFeatureSequence<f32> = audio::load_features(relative_to(list, &e.features))?;
            let loaded = motion::load_motion::<f32>(relative_to(list, &e.motion))?;
            let audio = if feats.len() == loaded.sequence.len() {
                feats.features().clone()
            } else {
                audio::align_to_frames(&feats, loaded.sequence.len())?
            };
            Ok(TrainingExample::new(audio, loaded.shape, loaded.sequence)?)
        })
        .collect::<Result<_>>()
        .with_context(|| format!("loading {}", list.display()))
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = resolve_config(&a)?;
    let data = load_examples(&a.data)?;
    let dir = out_dir(&a.out)?;
    let shown_cfg = cfg.clone();
    if cfg.train.checkpoint_every > 0 {
        cfg.train.checkpoint_dir = Some(dir.join("checkpoints"));
    }
    let mut trainer = match &a.resume {
        Some(ckpt) => Trainer::<f32>::resume(ckpt, Some(cfg.train.clone()))?,
        None => {
            cfg.model.d_audio = data[0].audio.cols();
            Trainer::new(Cvae::<f32>::new(cfg.model.clone())?, cfg.train.clone())?
        }
    };
    trainer.run(&data)?;
    trainer.save_checkpoint(dir.join("model.ckpt"))?;

    let mut csv = Vec::new();
    trainer.history().write_csv(&mut csv)?;
    fs::write(dir.join("losses.csv"), csv).map_err(|e| singer_core::Error::io(dir.join("losses.csv"), e))?;

    let last = trainer.history().epochs.last().map(|r| r.losses);
    write_manifest(
        &dir,
        "train",
        json!({
            "config": {
                "data": shown(&a.data),
                "config_file": a.config.as_deref().map(shown),
                "resume": a.resume.as_deref().map(shown),
                "train": shown_cfg.train,
                "model": trainer.model().config(),
            },
            "examples": data.len(),
            "epochs_done": trainer.epochs_done(),
            "steps_done": trainer.steps_done(),
            "final_epoch_losses": last,
            "outputs": ["model.ckpt", "losses.csv"],
        }),
    )
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Feature file from `features`.
    #[arg(long, conflicts_with = "audio")]
    features: Option<PathBuf>,
    /// WAV input; features are extracted on the fly.
    #[arg(long)]
    audio: Option<PathBuf>,
    /// Take the identity coefficients from this motion file (zeros otherwise).
    #[arg(long)]
    shape_from: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    samples: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    if a.features.is_none() == a.audio.is_none() {
        return Err(usage("generate needs exactly one of --features or --audio"));
    }
    let model = Cvae::<f32>::load(&a.model)?;
    let audio: Matrix<f32> = match (&a.features, &a.audio) {
        (Some(path), None) => {
            let feats: AudioFeatureSequence<f32> = audio::load_features(path)?;
            if feats.frame_rate() == DEFAULT_FPS {
                feats.features().clone()
            } else {
                let seconds = feats.len() as f64 / feats.frame_rate();
                let frames = (seconds * DEFAULT_FPS).round() as usize;
                audio::align_to_frames(&feats, frames)?
            }
        }
        (_, Some(path)) => aligned_features(&audio::load_wav(path)?)?,
        (None, None) => unreachable!("checked above"),
    };
    let shape = match &a.shape_from {
        Some(path) => motion::load_motion::<f32>(path)?.shape,
        None => ShapeParams::zeros(),
    };
    let samples = generation::generate_aligned(&model, &audio, &shape, a.samples, a.seed)?;
    let dir = out_dir(&a.out)?;
    let mut names = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let name = format!("sample_{i:03}.motion");
        motion::save_motion(dir.join(&name), s, &shape, &format!("sample-{i}"))?;
        names.push(name);
    }
    write_manifest(
        &dir,
        "generate",
        json!({
            "config": {
                "model": shown(&a.model),
                "features": a.features.as_deref().map(shown),
                "audio": a.audio.as_deref().map(shown),
                "shape_from": a.shape_from.as_deref().map(shown),
                "samples": a.samples,
                "seed": a.seed,
                "model_config": model.config(),
            },
            "frames": audio.rows(),
            "fps": DEFAULT_FPS,
            "outputs": names,
        }),
    )
}
