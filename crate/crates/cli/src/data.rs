use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde_json::json;
use singer_core::dataset::{self, ClipDescriptor, CropConfig, CropTrack, SequenceRecord, SplitRatios};

use crate::io::{out_dir, read_json, shown, write_json, write_manifest};
use crate::usage;

#[derive(Args)]
pub struct SegmentArgs {
    /// JSON array of recordings: `{id, duration, fps, audio?, motion?}`.
    #[arg(long)]
    records: PathBuf,
    #[arg(long, default_value_t = dataset::SEGMENT_SECONDS)]
    seg_seconds: f64,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    #[arg(long)]
    out: PathBuf,
}

pub fn segment(a: SegmentArgs) -> Result<()> {
    let records: Vec<SequenceRecord> = read_json(&a.records)?;
    let clips = dataset::segment(&records, a.seg_seconds, a.fps)?;
    let dir = out_dir(&a.out)?;
    write_json(&dir.join("clips.json"), &clips)?;
    write_manifest(
        &dir,
        "segment",
        json!({
            "config": { "records": shown(&a.records), "seg_seconds": a.seg_seconds, "fps": a.fps },
            "records": records.len(),
            "clips": clips.len(),
            "outputs": ["clips.json"],
        }),
    )
}

#[derive(Args)]
pub struct SplitArgs {
    /// Clip list written by `segment`.
    #[arg(long, conflicts_with = "n")]
    clips: Option<PathBuf>,
    /// Split the indices `0..n` instead of a clip list.
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated train,val,test ratios.
    #[arg(long, default_value = "0.8,0.05,0.15")]
    ratios: String,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_ratios(text: &str) -> Result<SplitRatios> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| usage(format!("bad --ratios '{text}': {e}")))?;
    let [train, val, test] = parts[..] else {
        return Err(usage(format!("--ratios needs three values, got '{text}'")));
    };
    let r = SplitRatios { train, val, test };
    r.validate().map_err(|e| usage(e.to_string()))?;
    Ok(r)
}

pub fn split(a: SplitArgs) -> Result<()> {
    let ratios = parse_ratios(&a.ratios)?;
    let ids: Vec<String> = match (&a.clips, a.n) {
        (Some(path), None) => {
            let clips: Vec<ClipDescriptor> = read_json(path)?;
            clips.iter().map(|c| format!("{}#{}", c.record_id, c.index)).collect()
        }
        (None, Some(n)) => (0..n).map(|i| i.to_string()).collect(),
        _ => return Err(usage("split needs exactly one of --clips or --n")),
    };
    let parts = dataset::split(&ids, ratios, a.seed)?;
    let dir = out_dir(&a.out)?;
    write_json(&dir.join("split.json"), &parts)?;
    write_manifest(
        &dir,
        "split",
        json!({
            "config": {
                "clips": a.clips.as_deref().map(shown),
                "n": a.n,
                "ratios": ratios,
                "seed": a.seed,
            },
            "counts": { "train": parts.train.len(), "val": parts.val.len(), "test": parts.test.len() },
            "outputs": ["split.json"],
        }),
    )
}

#[derive(Args)]
pub struct CropPlanArgs {
    /// Landmark track JSON: `{frame_width, frame_height, total_frames, check_interval, checks}`.
    #[arg(long)]
    track: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    margin: f64,
    #[arg(long, default_value_t = 0.05)]
    edge_threshold: f64,
    #[arg(long, default_value_t = 1024)]
    output_size: u32,
    #[arg(long)]
    out: PathBuf,
}

pub fn crop_plan(a: CropPlanArgs) -> Result<()> {
    let track: CropTrack = read_json(&a.track)?;
    let config = CropConfig {
        margin_ratio: a.margin,
        edge_threshold: a.edge_threshold,
        output_size: a.output_size,
    };
    let plan = dataset::crop_plan(&track, &config)?;
    let dir = out_dir(&a.out)?;
    write_json(&dir.join("cropplan.json"), &plan)?;
    write_manifest(
        &dir,
        "cropplan",
        json!({
            "config": { "track": shown(&a.track), "crop": config },
            "segments": plan.len(),
            "outputs": ["cropplan.json"],
        }),
    )
}
