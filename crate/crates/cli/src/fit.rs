use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use serde::Deserialize;
use serde_json::json;
use singer_core::headfit::{
    fit_sequence, fit_shape, Method, Scan, SequenceFitConfig, ShapeFitConfig, SolverConfig, ToyHeadModel,
    DEFAULT_MODEL_SEED,
};
use singer_core::metrics::LandmarkTrack;
use singer_core::motion::{self, ShapeParams, DEFAULT_FPS};
use singer_core::Matrix;

use crate::io::{out_dir, read_json, shown, write_json, write_manifest};

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Lm,
    Gd,
}

#[derive(Args)]
pub struct FitArgs {
    /// Landmark track JSON: `{"frames": [[[x, y], ...68], ...]}` in pixels.
    #[arg(long)]
    landmarks: PathBuf,
    /// Head model file; the bundled toy head is used when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Scan JSON `{"points": [[x,y,z],...], "landmarks": [[x,y,z] x68]}` to refine identity first.
    #[arg(long)]
    scan: Option<PathBuf>,
    /// Initial identity from a motion file (zeros otherwise).
    #[arg(long)]
    shape_from: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    lambda_smooth: f64,
    #[arg(long, value_enum, default_value = "lm")]
    method: MethodArg,
    #[arg(long, default_value_t = 2000)]
    max_iters: usize,
    #[arg(long, default_value_t = DEFAULT_FPS)]
    fps: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Deserialize)]
struct ScanFile {
    points: Vec<[f64; 3]>,
    landmarks: Option<Vec<[f64; 3]>>,
}

fn rows(points: &[[f64; 3]]) -> Matrix<f64> {
    Matrix::from_rows(&points.iter().map(|p| p.to_vec()).collect::<Vec<_>>())
}

pub fn fit(a: FitArgs) -> Result<()> {
    let model = match &a.model {
        Some(path) => ToyHeadModel::<f64>::load(path)?,
        None => ToyHeadModel::generate(DEFAULT_MODEL_SEED),
    };
    let raw: LandmarkTrack<f64> = read_json(&a.landmarks)?;
    let track = LandmarkTrack::with_subset(raw.frames, raw.mouth)?;
    let solver = SolverConfig {
        method: match a.method {
            MethodArg::Lm => Method::LevenbergMarquardt,
            MethodArg::Gd => Method::GradientDescent,
        },
        max_iters: a.max_iters,
        ..SolverConfig::default()
    };

    let mut shape = match &a.shape_from {
        Some(path) => motion::load_motion::<f64>(path)?.shape,
        None => ShapeParams::zeros(),
    };
    let mut shape_report = None;
    if let Some(path) = &a.scan {
        let file: ScanFile = read_json(path)?;
        let scan = Scan::new(rows(&file.points), file.landmarks.as_deref().map(rows))?;
        let cfg = ShapeFitConfig { solver, ..ShapeFitConfig::default() };
        let fitted = fit_shape(&model, &scan, &shape, &cfg)?;
        shape = fitted.shape;
        shape_report = Some(fitted.report);
    }

    let cfg = SequenceFitConfig {
        lambda_smooth: a.lambda_smooth,
        solver,
    };
    let fit = fit_sequence(&model, &shape, &track, None, &cfg)?;
    let dir = out_dir(&a.out)?;
    motion::save_motion(dir.join("fit.motion"), &fit.motion(a.fps)?, &shape, "fit")?;
    write_json(&dir.join("cameras.json"), &fit.cameras())?;
    write_manifest(
        &dir,
        "fit",
        json!({
            "config": {
                "landmarks": shown(&a.landmarks),
                "model": a.model.as_deref().map(shown),
                "scan": a.scan.as_deref().map(shown),
                "shape_from": a.shape_from.as_deref().map(shown),
                "sequence": cfg,
                "fps": a.fps,
            },
            "frames": track.len(),
            "rmse_px": fit.rmse_px,
            "sequence_fit": {
                "iterations": fit.report.iterations,
                "converged": fit.report.converged,
                "initial_loss": fit.report.initial_loss(),
                "final_loss": fit.report.final_loss(),
            },
            "shape_fit": shape_report.map(|r| json!({
                "iterations": r.iterations,
                "converged": r.converged,
                "initial_loss": r.initial_loss(),
                "final_loss": r.final_loss(),
            })),
            "outputs": ["fit.motion", "cameras.json"],
        }),
    )
}
