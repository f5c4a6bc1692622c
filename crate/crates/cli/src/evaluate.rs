use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde_json::json;
use singer_core::metrics::{self, LandmarkTrack, SampleSet, SsimConfig};
use singer_core::motion::{self, MotionSequence};
use singer_core::{Error, Matrix};

use crate::io::{out_dir, read_json, shown, write_manifest};
use crate::usage;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Motion-space scores against ground-truth parameters.
    #[value(name = "3d")]
    Motion,
    /// Image-space scores: landmarks, frames and embeddings.
    #[value(name = "2d")]
    Image,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    /// Ground-truth motion file (3d).
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Sample motion files, or directories scanned for `*.motion` (3d).
    #[arg(long, num_args = 1..)]
    samples: Vec<PathBuf>,
    /// Comma-separated sample counts; one row per prefix of the sample list (3d).
    #[arg(long)]
    n: Option<String>,
    /// Predicted and reference landmark tracks (2d).
    #[arg(long, requires = "gt_landmarks")]
    pred_landmarks: Option<PathBuf>,
    #[arg(long, requires = "pred_landmarks")]
    gt_landmarks: Option<PathBuf>,
    /// Directories of PNG frames paired by file name (2d).
    #[arg(long, requires = "gt_images")]
    pred_images: Option<PathBuf>,
    #[arg(long, requires = "pred_images")]
    gt_images: Option<PathBuf>,
    /// Headerless CSV embedding tables, one row per image (2d).
    #[arg(long, requires = "gt_embeddings")]
    pred_embeddings: Option<PathBuf>,
    #[arg(long, requires = "pred_embeddings")]
    gt_embeddings: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    match a.mode {
        Mode::Motion => evaluate_motion(&a),
        Mode::Image => evaluate_image(&a),
    }
}

fn list_dir(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    files.sort();
    Ok(files)
}

fn sample_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            files.extend(list_dir(p, "motion")?);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(usage("--samples matched no motion files"));
    }
    Ok(files)
}

fn fmt_score(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.9}"))
}

fn evaluate_motion(a: &EvaluateArgs) -> Result<()> {
    let gt_path = a.gt.as_ref().ok_or_else(|| usage("--mode 3d needs --gt"))?;
    let gt: MotionSequence<f64> = motion::load_motion(gt_path)?.sequence;
    let files = sample_files(&a.samples)?;
    let samples = files
        .iter()
        .map(|f| Ok(motion::load_motion::<f64>(f)?.sequence))
        .collect::<Result<Vec<_>>>()?;
    let set = SampleSet::new(samples)?;
    let counts: Vec<usize> = match &a.n {
        Some(text) => text
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| usage(format!("bad --n '{text}': {e}")))?,
        None => vec![set.len()],
    };
    if let Some(&bad) = counts.iter().find(|&&n| n == 0 || n > set.len()) {
        return Err(usage(format!("--n {bad} outside 1..={}", set.len())));
    }

    let dir = out_dir(&a.out)?;
    let mut w = csv::Writer::from_path(dir.join("scores.csv")).context("writing scores.csv")?;
    w.write_record(["n", "MinDist", "MeanDist", "APD"])?;
    let mut rows = Vec::new();
    for &n in &counts {
        let s = metrics::motion_scores(&set.prefix(n)?, &gt)?;
        w.write_record([
            n.to_string(),
            fmt_score(Some(s.min_dist)),
            fmt_score(Some(s.mean_dist)),
            fmt_score(s.apd),
        ])?;
        rows.push(json!({ "n": n, "scores": s }));
    }
    w.flush()?;
    write_manifest(
        &dir,
        "evaluate",
        json!({
            "config": {
                "mode": "3d",
                "gt": shown(gt_path),
                "samples": files.iter().map(|p| shown(p)).collect::<Vec<_>>(),
                "n": counts,
            },
            "rows": rows,
            "outputs": ["scores.csv"],
        }),
    )
}

/// RGB planes in `[0, 1]`.
fn load_planes(path: &Path) -> Result<Vec<Matrix<f64>>> {
    let img = image::open(path)
        .map_err(|e| Error::validation(format!("{}: {e}", path.display())))?
        .to_rgb32f();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok((0..3)
        .map(|c| Matrix::from_fn(h, w, |r, col| img.get_pixel(col as u32, r as u32)[c] as f64))
        .collect())
}

fn image_ssim(pred: &Path, gt: &Path) -> Result<(f64, usize)> {
    let pred_files = list_dir(pred, "png")?;
    let gt_files = list_dir(gt, "png")?;
    let names = |v: &[PathBuf]| v.iter().map(|p| p.file_name().map(|n| n.to_owned())).collect::<Vec<_>>();
    if pred_files.is_empty() || names(&pred_files) != names(&gt_files) {
        return Err(Error::validation(format!(
            "image directories must hold the same non-empty set of PNG names ({} vs {})",
            pred_files.len(),
            gt_files.len()
        ))
        .into());
    }
    let cfg = SsimConfig::default();
    let mut total = 0.0;
    for (p, g) in pred_files.iter().zip(&gt_files) {
        total += metrics::ssim_channels(&load_planes(p)?, &load_planes(g)?, &cfg)
            .with_context(|| format!("scoring {}", p.display()))?;
    }
    Ok((total / pred_files.len() as f64, pred_files.len()))
}

fn read_embeddings(path: &Path) -> Result<Matrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
        let row = record
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::validation(format!("{}: no embeddings", path.display())).into());
    }
    if rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::validation(format!("{}: ragged embedding rows", path.display())).into());
    }
    Ok(Matrix::from_rows(&rows))
}

fn evaluate_image(a: &EvaluateArgs) -> Result<()> {
    let lmd = match (&a.pred_landmarks, &a.gt_landmarks) {
        (Some(p), Some(g)) => {
            let pred: LandmarkTrack<f64> = read_json(p)?;
            let gt: LandmarkTrack<f64> = read_json(g)?;
            let pred = LandmarkTrack::with_subset(pred.frames, pred.mouth)?;
            let gt = LandmarkTrack::with_subset(gt.frames, gt.mouth)?;
            Some(metrics::lmd(&pred, &gt)?)
        }
        _ => None,
    };
    let fid = match (&a.pred_embeddings, &a.gt_embeddings) {
        (Some(p), Some(g)) => Some(metrics::fid(&read_embeddings(p)?, &read_embeddings(g)?)?),
        _ => None,
    };
    let ssim = match (&a.pred_images, &a.gt_images) {
        (Some(p), Some(g)) => Some(image_ssim(p, g)?),
        _ => None,
    };
    if lmd.is_none() && fid.is_none() && ssim.is_none() {
        return Err(usage("--mode 2d needs landmark, embedding or image pairs"));
    }

    let dir = out_dir(&a.out)?;
    let mut w = csv::Writer::from_path(dir.join("scores.csv")).context("writing scores.csv")?;
    w.write_record(["LMD", "FID", "SSIM"])?;
    w.write_record([fmt_score(lmd), fmt_score(fid), fmt_score(ssim.map(|s| s.0))])?;
    w.flush()?;
    let opt = |p: &Option<PathBuf>| p.as_deref().map(shown);
    write_manifest(
        &dir,
        "evaluate",
        json!({
            "config": {
                "mode": "2d",
                "pred_landmarks": opt(&a.pred_landmarks),
                "gt_landmarks": opt(&a.gt_landmarks),
                "pred_images": opt(&a.pred_images),
                "gt_images": opt(&a.gt_images),
                "pred_embeddings": opt(&a.pred_embeddings),
                "gt_embeddings": opt(&a.gt_embeddings),
            },
            "scores": { "lmd": lmd, "fid": fid, "ssim": ssim.map(|s| s.0) },
            "image_pairs": ssim.map(|s| s.1),
            "outputs": ["scores.csv"],
        }),
    )
}
