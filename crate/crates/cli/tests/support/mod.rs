//! Fixtures shared by the command-line test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use anyhow::{bail, ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use singer_core::audio::{save_wav, AudioClip};
use singer_core::headfit::{render_landmarks, FrameParams, Scan, ToyHeadModel, DEFAULT_MODEL_SEED, FRAME_PARAMS};
use singer_core::motion::{save_motion, CameraParams, MotionSequence, ShapeParams, FRAME_DIM, SHAPE_DIM};
use singer_core::training::TrainingExample;
use singer_core::{Matrix, Scalar};

pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, half_width: f64) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-half_width..half_width))
}

pub fn random_motion(rng: &mut ChaCha8Rng, frames: usize) -> MotionSequence<f64> {
    MotionSequence::from_matrix(uniform_matrix(rng, frames, FRAME_DIM, 1.0), 30.0).unwrap()
}

pub fn unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let h = 1e-6;
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / |b|` in the Euclidean norm.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    diff / b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-12)
}

pub fn head_model() -> ToyHeadModel<f64> {
    ToyHeadModel::generate(DEFAULT_MODEL_SEED)
}

/// Noise-free scan of the neutral head with identity `beta`.
pub fn scan_of(model: &ToyHeadModel<f64>, beta: &[f64]) -> Scan {
    let v = model.forward(beta, &[0.0; 50], &[0.0; 50]).unwrap();
    let lm = Matrix::from_rows(&model.landmark_indices().iter().map(|&i| v.row(i).to_vec()).collect::<Vec<_>>());
    Scan::new(v, Some(lm)).unwrap()
}

/// Smooth expression, jaw and head motion under a slowly drifting camera.
pub fn synthetic_performance(rng: &mut ChaCha8Rng, frames: usize) -> Vec<FrameParams> {
    let base: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
    let drift: Vec<f64> = (0..50).map(|_| rng.random_range(-0.05..0.05)).collect();
    (0..frames)
        .map(|t| {
            let s = t as f64;
            let mut pose = vec![0.0; 50];
            pose[0] = 0.1 + 0.08 * (0.3 * s).sin();
            pose[3] = 0.05 * (0.2 * s).cos();
            pose[4] = 0.15 * (0.1 * s).sin();
            pose[5] = -0.03;
            FrameParams {
                expression: base.iter().zip(&drift).map(|(b, d)| b + d * s).collect(),
                pose,
                camera: CameraParams::new(2000.0 + 5.0 * s, [256.0 + 0.5 * s, 250.0 - 0.3 * s]).unwrap(),
            }
        })
        .collect()
}

/// Packed parameters of `truth` with per-slot noise (large on the camera).
pub fn jittered(rng: &mut ChaCha8Rng, truth: &[FrameParams]) -> Vec<f64> {
    truth
        .iter()
        .flat_map(|f| f.pack())
        .enumerate()
        .map(|(i, v)| {
            let width = if i % FRAME_PARAMS >= FRAME_PARAMS - 3 { 3.0 } else { 0.2 };
            v + rng.random_range(-width..width)
        })
        .collect()
}

/// Sequences whose motion is a smooth function of time and of the audio phase.
pub fn toy_dataset<T: Scalar>(n: usize, frames: usize, audio_dims: usize, seed: u64) -> Vec<TrainingExample<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let speed = rng.random_range(0.15..0.35);
            let audio = Matrix::from_fn(frames, audio_dims, |t, c| {
                let w = (c / 2 + 1) as f64;
                let a = w * (speed * t as f64 + phase);
                T::of(if c % 2 == 0 { a.sin() } else { a.cos() })
            });
            let weights: Vec<f64> = (0..FRAME_DIM).map(|_| rng.random_range(-0.6..0.6)).collect();
            let motion = Matrix::from_fn(frames, FRAME_DIM, |t, d| {
                let a = speed * t as f64 + phase + 0.05 * d as f64;
                T::of(weights[d] * a.sin())
            });
            let shape = ShapeParams::new((0..SHAPE_DIM).map(|_| T::of(rng.random_range(-0.5..0.5))).collect()).unwrap();
            TrainingExample::new(audio, shape, MotionSequence::from_matrix(motion, 30.0).unwrap()).unwrap()
        })
        .collect()
}

pub fn singer() -> Command {
    Command::new(env!("CARGO_BIN_EXE_singer"))
}

pub fn run(args: &[&str]) -> Result<Output> {
    let out = singer().args(args).output().context("spawning singer")?;
    Ok(out)
}

pub fn run_ok(args: &[&str]) -> Result<()> {
    let out = run(args)?;
    if !out.status.success() {
        bail!("singer {} failed ({}): {}", args.join(" "), out.status, String::from_utf8_lossy(&out.stderr));
    }
    Ok(())
}

/// Relative path → bytes for every file under `dir`.
pub fn snapshot(dir: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(dir)?.to_path_buf(), fs::read(&path)?);
            }
        }
    }
    Ok(files)
}

pub fn sine_wav(path: &Path, seconds: f64, freq: f64) -> Result<()> {
    let rate = 16_000u32;
    let n = (seconds * rate as f64).round() as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            (0.4 * (std::f64::consts::TAU * freq * t).sin() * (1.0 + 0.5 * (3.0 * t).sin())) as f32
        })
        .collect();
    save_wav(path, &AudioClip::new(samples, rate)?)?;
    Ok(())
}

/// Inputs for every subcommand, written under `root`.
pub struct Fixture {
    pub root: PathBuf,
}

impl Fixture {
    pub fn new(root: &Path) -> Result<Self> {
        let fx = Self { root: root.to_path_buf() };
        let mut rng = ChaCha8Rng::seed_from_u64(99);

        for (i, freq) in [220.0, 330.0].iter().enumerate() {
            sine_wav(&fx.path(&format!("clip{i}.wav")), 2.0, *freq)?;
        }
        let mut list = Vec::new();
        for i in 0..2 {
            let frames = 60;
            let motion = Matrix::from_fn(frames, FRAME_DIM, |t, d| 0.3 * ((0.2 + 0.1 * i as f64) * t as f64 + 0.07 * d as f64).sin());
            let shape = ShapeParams::new((0..SHAPE_DIM).map(|_| rng.random_range(-0.3..0.3)).collect())?;
            save_motion(fx.path(&format!("clip{i}.motion")), &MotionSequence::from_matrix(motion, 30.0)?, &shape, "singer")?;
            list.push(serde_json::json!({
                "features": format!("feat{i}/features.bin"),
                "motion": format!("clip{i}.motion"),
            }));
        }
        fs::write(fx.path("train.json"), serde_json::to_string(&list)?)?;

        fs::write(
            fx.path("records.json"),
            r#"[{"id":"a","duration":30.5,"fps":30},{"id":"b","duration":7.0,"fps":30},{"id":"c","duration":16.0,"fps":30}]"#,
        )?;

        let checks: Vec<Vec<[f64; 2]>> = (0..20)
            .map(|k| {
                let drift = if (8..12).contains(&k) { 400.0 } else { 0.0 };
                (0..68)
                    .map(|j| {
                        let a = j as f64 / 68.0 * std::f64::consts::TAU;
                        [960.0 + drift + 120.0 * a.cos(), 540.0 + 150.0 * a.sin()]
                    })
                    .collect()
            })
            .collect();
        fs::write(
            fx.path("track.json"),
            serde_json::to_string(&serde_json::json!({
                "frame_width": 1920.0, "frame_height": 1080.0, "total_frames": 120, "check_interval": 6, "checks": checks,
            }))?,
        )?;

        let model = head_model();
        let beta = ShapeParams::new(unit_vector(&mut rng, SHAPE_DIM))?;
        let frames = synthetic_performance(&mut rng, 6);
        let lm = render_landmarks(&model, &beta, &frames)?;
        fs::write(fx.path("landmarks.json"), serde_json::to_string(&lm)?)?;
        let mut frames2 = frames.clone();
        for f in &mut frames2 {
            f.expression.iter_mut().for_each(|e| *e *= 0.9);
        }
        fs::write(fx.path("landmarks_pred.json"), serde_json::to_string(&render_landmarks(&model, &beta, &frames2)?)?)?;

        for dir in ["img_pred", "img_gt"] {
            fs::create_dir_all(fx.path(dir))?;
            for k in 0..2 {
                let bias = if dir == "img_pred" { 12u8 } else { 0 };
                let img = image::RgbImage::from_fn(48, 40, |x, y| {
                    let v = ((x * 5 + y * 3 + k * 17) % 200) as u8;
                    image::Rgb([v.saturating_add(bias), v / 2, 255 - v])
                });
                img.save(fx.path(&format!("{dir}/frame{k}.png")))?;
            }
        }
        let emb = |shift: f64, rng: &mut ChaCha8Rng| {
            (0..12)
                .map(|_| (0..4).map(|_| format!("{:.6}", shift + rng.random_range(-1.0..1.0))).collect::<Vec<_>>().join(","))
                .collect::<Vec<_>>()
                .join("\n")
        };
        fs::write(fx.path("emb_pred.csv"), emb(0.5, &mut rng))?;
        fs::write(fx.path("emb_gt.csv"), emb(0.0, &mut rng))?;
        Ok(fx)
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn arg(&self, rel: &str) -> String {
        self.path(rel).display().to_string()
    }
}

const TINY_MODEL: &[&str] = &[
    "--d-model", "16", "--layers-enc", "1", "--layers-dec", "1", "--heads", "2", "--ff-dim", "32", "--batch-size", "1",
];

/// Every subcommand with fixed inputs, keyed by a label. Output directories
/// are appended by the caller through `{out}`.
pub fn pipeline(fx: &Fixture) -> Vec<(&'static str, Vec<String>)> {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let mut train = s(&["train", "--data", &fx.arg("train.json"), "--seed", "3", "--epochs", "2"]);
    train.extend(s(TINY_MODEL));
    vec![
        ("features", s(&["features", "--audio", &fx.arg("clip0.wav")])),
        ("segment", s(&["segment", "--records", &fx.arg("records.json")])),
        ("split", s(&["split", "--n", "12196", "--seed", "1"])),
        ("cropplan", s(&["cropplan", "--track", &fx.arg("track.json")])),
        ("train", train),
        (
            "generate",
            s(&["generate", "--model", &fx.arg("model/model.ckpt"), "--features", &fx.arg("feat0/features.bin"), "--samples", "3", "--seed", "7"]),
        ),
        ("fit", s(&["fit", "--landmarks", &fx.arg("landmarks.json")])),
        ("evaluate-3d", s(&["evaluate", "--mode", "3d", "--gt", &fx.arg("clip0.motion"), "--samples", &fx.arg("samples"), "--n", "1,3"])),
        (
            "evaluate-2d",
            s(&[
                "evaluate", "--mode", "2d",
                "--pred-landmarks", &fx.arg("landmarks_pred.json"), "--gt-landmarks", &fx.arg("landmarks.json"),
                "--pred-images", &fx.arg("img_pred"), "--gt-images", &fx.arg("img_gt"),
                "--pred-embeddings", &fx.arg("emb_pred.csv"), "--gt-embeddings", &fx.arg("emb_gt.csv"),
            ]),
        ),
    ]
}

/// Prepares the artifacts later pipeline stages read from the fixture root.
pub fn prepare_stage_inputs(fx: &Fixture) -> Result<()> {
    for i in 0..2 {
        run_ok(&["features", "--audio", &fx.arg(&format!("clip{i}.wav")), "--out", &fx.arg(&format!("feat{i}"))])?;
    }
    let mut train: Vec<String> = ["train", "--data", &fx.arg("train.json"), "--seed", "3", "--epochs", "2", "--out", &fx.arg("model")]
        .iter()
        .map(|s| s.to_string())
        .collect();
    train.extend(TINY_MODEL.iter().map(|s| s.to_string()));
    run_ok(&train.iter().map(String::as_str).collect::<Vec<_>>())?;
    run_ok(&[
        "generate", "--model", &fx.arg("model/model.ckpt"), "--features", &fx.arg("feat0/features.bin"),
        "--samples", "3", "--seed", "7", "--out", &fx.arg("samples"),
    ])?;
    Ok(())
}

/// Runs every subcommand twice and compares output trees byte for byte, then
/// checks that resuming a checkpoint reproduces uninterrupted training.
pub fn cli_determinism() -> Result<usize> {
    let tmp = tempfile::tempdir()?;
    let fx = Fixture::new(tmp.path())?;
    prepare_stage_inputs(&fx)?;
    let commands = pipeline(&fx);
    for (label, args) in &commands {
        let mut trees = Vec::new();
        for rep in 0..2 {
            let out = fx.path(&format!("runs/{label}-{rep}"));
            let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
            let out_arg = out.display().to_string();
            full.extend(["--out", &out_arg]);
            run_ok(&full)?;
            trees.push(snapshot(&out)?);
        }
        ensure!(!trees[0].is_empty(), "{label} wrote nothing");
        ensure!(trees[0] == trees[1], "{label} outputs differ between identical runs");
    }

    let base: Vec<String> = ["train", "--data", &fx.arg("train.json"), "--seed", "5"]
        .iter()
        .map(|s| s.to_string())
        .chain(TINY_MODEL.iter().map(|s| s.to_string()))
        .collect();
    let train = |extra: &[&str]| -> Result<()> {
        let mut args: Vec<&str> = base.iter().map(String::as_str).collect();
        args.extend(extra);
        run_ok(&args)
    };
    train(&["--epochs", "4", "--out", &fx.arg("resume/full")])?;
    train(&["--epochs", "2", "--out", &fx.arg("resume/half")])?;
    train(&["--epochs", "4", "--resume", &fx.arg("resume/half/model.ckpt"), "--out", &fx.arg("resume/rest")])?;
    let full = fs::read(fx.path("resume/full/model.ckpt"))?;
    let rest = fs::read(fx.path("resume/rest/model.ckpt"))?;
    ensure!(full == rest, "resumed checkpoint differs from uninterrupted training");
    Ok(commands.len())
}
