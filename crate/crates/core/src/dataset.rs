//! Data protocol: fixed-length segmentation, seeded splits and crop planning
//! for long landmark-tracked recordings.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SEGMENT_SECONDS: f64 = 8.0;

/// One recording in the inventory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub id: String,
    pub duration: f64,
    pub fps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion: Option<PathBuf>,
}

impl SequenceRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::validation(format!(
                "record {}: duration must be positive, got {}",
                self.id, self.duration
            )));
        }
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return Err(Error::validation(format!("record {}: fps must be positive", self.id)));
        }
        Ok(())
    }
}

/// A fixed-length window of a record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipDescriptor {
    pub record_id: String,
    pub index: usize,
    pub start_seconds: f64,
    pub start_frame: usize,
    pub frames: usize,
}

/// Cuts each record into `floor(duration / seg_seconds)` back-to-back clips
/// of `round(seg_seconds * fps)` frames; the remainder is dropped.
pub fn segment(records: &[SequenceRecord], seg_seconds: f64, fps: f64) -> Result<Vec<ClipDescriptor>> {
    if !(seg_seconds > 0.0) || !(fps > 0.0) {
        return Err(Error::validation("segment length and fps must be positive"));
    }
    let frames = (seg_seconds * fps).round() as usize;
    let mut clips = Vec::new();
    for rec in records {
        rec.validate()?;
        let count = (rec.duration / seg_seconds).floor() as usize;
        clips.extend((0..count).map(|k| ClipDescriptor {
            record_id: rec.id.clone(),
            index: k,
            start_seconds: k as f64 * seg_seconds,
            start_frame: k * frames,
            frames,
        }));
    }
    Ok(clips)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.80,
            val: 0.05,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::validation("split ratios must lie in [0, 1]"));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::validation("split ratios must sum to 1"));
        }
        Ok(())
    }

    /// `(train, val, test)` sizes: val and test are floored, train takes the rest.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        // The epsilon keeps products like 0.15 * 20 from landing just under an integer.
        let floor = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
        let test = floor(self.test);
        let val = floor(self.val);
        (n - test - val, val, test)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split<C> {
    pub train: Vec<C>,
    pub val: Vec<C>,
    pub test: Vec<C>,
}

/// Seeded shuffle followed by a floor-rounded partition.
pub fn split<C: Clone>(items: &[C], ratios: SplitRatios, seed: u64) -> Result<Split<C>> {
    ratios.validate()?;
    if items.is_empty() {
        return Err(Error::validation("cannot split an empty set"));
    }
    let (n_train, n_val, _) = ratios.counts(items.len());
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok(Split {
        train: pick(&order[..n_train]),
        val: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}

/// Landmarks sampled at a fixed cadence over a long recording.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropTrack {
    pub frame_width: f64,
    pub frame_height: f64,
    /// Total video frames covered by the track.
    pub total_frames: usize,
    /// Frames between consecutive landmark checks.
    pub check_interval: usize,
    /// Landmarks at frames `0, check_interval, 2 * check_interval, ...`.
    pub checks: Vec<Vec<[f64; 2]>>,
}

impl CropTrack {
    pub fn validate(&self) -> Result<()> {
        if self.checks.is_empty() {
            return Err(Error::validation("crop track has no landmark checks"));
        }
        if self.check_interval == 0 {
            return Err(Error::validation("check interval must be positive"));
        }
        if !(self.frame_width > 0.0 && self.frame_height > 0.0) {
            return Err(Error::validation("frame size must be positive"));
        }
        let points = self.checks[0].len();
        if points == 0 || self.checks.iter().any(|c| c.len() != points) {
            return Err(Error::validation("landmark checks must share a non-zero point count"));
        }
        let last_check = (self.checks.len() - 1) * self.check_interval;
        if self.total_frames <= last_check {
            return Err(Error::validation(format!(
                "track of {} frames ends before its last check at frame {last_check}",
                self.total_frames
            )));
        }
        let inside = |p: &[f64; 2]| {
            (0.0..=self.frame_width).contains(&p[0]) && (0.0..=self.frame_height).contains(&p[1])
        };
        if !self.checks[0].iter().all(inside) {
            return Err(Error::validation("opening landmarks lie outside the frame"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropConfig {
    /// Margin on each side, as a fraction of the landmark box side.
    pub margin_ratio: f64,
    /// A landmark closer than this fraction of the crop side to its border forces a cut.
    pub edge_threshold: f64,
    pub output_size: u32,
}

impl Default for CropConfig {
    fn default() -> Self {
        Self {
            margin_ratio: 0.25,
            edge_threshold: 0.05,
            output_size: 1024,
        }
    }
}

/// Square crop window in source pixels (top-left corner and side).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropBox {
    pub x: f64,
    pub y: f64,
    pub side: f64,
}

impl CropBox {
    /// Smallest distance from `p` to the box border, negative outside.
    pub fn border_distance(&self, p: [f64; 2]) -> f64 {
        let dx = (p[0] - self.x).min(self.x + self.side - p[0]);
        let dy = (p[1] - self.y).min(self.y + self.side - p[1]);
        dx.min(dy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropSegment {
    pub start_frame: usize,
    /// Exclusive.
    pub end_frame: usize,
    pub crop_box: CropBox,
    pub output_size: u32,
}

/// Box around `points` grown by the margin, then shifted to stay inside the frame.
pub fn fit_crop_box(points: &[[f64; 2]], width: f64, height: f64, margin_ratio: f64) -> Result<CropBox> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let face = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let side = face * (1.0 + 2.0 * margin_ratio);
    if side > width.min(height) {
        return Err(Error::validation(format!(
            "face box of side {side:.1} px does not fit a {width}x{height} frame"
        )));
    }
    let cx = 0.5 * (lo[0] + hi[0]);
    let cy = 0.5 * (lo[1] + hi[1]);
    Ok(CropBox {
        x: (cx - side / 2.0).clamp(0.0, width - side),
        y: (cy - side / 2.0).clamp(0.0, height - side),
        side,
    })
}

/// Splits the track wherever a landmark drifts into the border band of the
/// current box; each new segment gets a box fitted to its opening check.
pub fn crop_plan(track: &CropTrack, config: &CropConfig) -> Result<Vec<CropSegment>> {
    track.validate()?;
    if !(config.margin_ratio >= 0.0) || !(config.edge_threshold >= 0.0) {
        return Err(Error::validation("crop margin and threshold must be non-negative"));
    }
    let fit = |k: usize| {
        fit_crop_box(&track.checks[k], track.frame_width, track.frame_height, config.margin_ratio)
    };
    let mut segments = Vec::new();
    let mut start = 0usize;
    let mut current = fit(0)?;
    for (k, points) in track.checks.iter().enumerate().skip(1) {
        let band = config.edge_threshold * current.side;
        if points.iter().any(|&p| current.border_distance(p) < band) {
            let frame = k * track.check_interval;
            segments.push(CropSegment {
                start_frame: start,
                end_frame: frame,
                crop_box: current,
                output_size: config.output_size,
            });
            start = frame;
            current = fit(k)?;
        }
    }
    segments.push(CropSegment {
        start_frame: start,
        end_frame: track.total_frames,
        crop_box: current,
        output_size: config.output_size,
    });
    Ok(segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use std::collections::HashSet;

    fn rec(id: &str, duration: f64) -> SequenceRecord {
        SequenceRecord {
            id: id.into(),
            duration,
            fps: 30.0,
            audio: None,
            motion: None,
        }
    }

    #[test]
    fn segment_counts() {
        assert_eq!(segment(&[rec("a", 20.0)], 8.0, 30.0).unwrap().len(), 2);
        assert!(segment(&[rec("a", 7.9)], 8.0, 30.0).unwrap().is_empty());
        let clips = segment(&[rec("a", 16.0), rec("b", 9.0)], 8.0, 30.0).unwrap();
        assert_eq!(clips.len(), 3);
        assert_eq!(clips[1].start_frame, 240);
        assert!(clips.iter().all(|c| c.frames == 240));
        assert!(segment(&[rec("a", 0.0)], 8.0, 30.0).is_err());
    }

    #[test]
    fn segment_matches_duration_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let records: Vec<_> = (0..100)
            .map(|i| rec(&i.to_string(), rng.random_range(0.1..120.0)))
            .collect();
        let mut expected = 0;
        for r in &records {
            let mut t = 0.0;
            while t + 8.0 <= r.duration {
                expected += 1;
                t += 8.0;
            }
        }
        assert_eq!(segment(&records, 8.0, 30.0).unwrap().len(), expected);
    }

    #[test]
    fn split_counts() {
        let r = SplitRatios::default();
        assert_eq!(r.counts(12196), (9758, 609, 1829));
        assert_eq!(r.counts(20), (16, 1, 3));
        assert!(split::<u32>(&[], r, 0).is_err());
        let bad = SplitRatios { train: 0.5, val: 0.1, test: 0.1 };
        assert!(split(&[1, 2, 3], bad, 0).is_err());
    }

    #[test]
    fn split_is_seeded() {
        let items: Vec<u32> = (0..100).collect();
        let r = SplitRatios::default();
        assert_eq!(split(&items, r, 3).unwrap(), split(&items, r, 3).unwrap());
        assert_ne!(split(&items, r, 3).unwrap(), split(&items, r, 4).unwrap());
    }

    proptest! {
        #[test]
        fn split_partitions(n in 1usize..3000, seed: u64) {
            let items: Vec<usize> = (0..n).collect();
            let s = split(&items, SplitRatios::default(), seed).unwrap();
            let all: HashSet<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            prop_assert_eq!(s.train.len() + s.val.len() + s.test.len(), n);
            prop_assert_eq!(all.len(), n);
        }
    }

    fn square_face(cx: f64, cy: f64, half: f64) -> Vec<[f64; 2]> {
        vec![[cx - half, cy - half], [cx + half, cy + half], [cx, cy], [cx - half, cy + half]]
    }

    fn track(checks: Vec<Vec<[f64; 2]>>) -> CropTrack {
        let total = (checks.len() - 1) * 6 + 6;
        CropTrack {
            frame_width: 1920.0,
            frame_height: 1080.0,
            total_frames: total,
            check_interval: 6,
            checks,
        }
    }

    /// Independent simulation: recompute box and band with plain arithmetic.
    fn simulate_cuts(t: &CropTrack, margin: f64, thr: f64) -> Vec<usize> {
        let boxed = |pts: &[[f64; 2]]| {
            let xs: Vec<f64> = pts.iter().map(|p| p[0]).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p[1]).collect();
            let (x0, x1) = (xs.iter().cloned().fold(f64::MAX, f64::min), xs.iter().cloned().fold(f64::MIN, f64::max));
            let (y0, y1) = (ys.iter().cloned().fold(f64::MAX, f64::min), ys.iter().cloned().fold(f64::MIN, f64::max));
            let side = (x1 - x0).max(y1 - y0) * (1.0 + 2.0 * margin);
            let left = ((x0 + x1) / 2.0 - side / 2.0).max(0.0).min(t.frame_width - side);
            let top = ((y0 + y1) / 2.0 - side / 2.0).max(0.0).min(t.frame_height - side);
            (left, top, side)
        };
        let mut cuts = vec![];
        let mut b = boxed(&t.checks[0]);
        for k in 1..t.checks.len() {
            let close = t.checks[k].iter().any(|p| {
                let d = [p[0] - b.0, b.0 + b.2 - p[0], p[1] - b.1, b.1 + b.2 - p[1]];
                d.iter().any(|&v| v < thr * b.2)
            });
            if close {
                cuts.push(k * 6);
                b = boxed(&t.checks[k]);
            }
        }
        cuts
    }

    #[test]
    fn static_face_is_one_segment() {
        let t = track(vec![square_face(900.0, 500.0, 100.0); 50]);
        let plan = crop_plan(&t, &CropConfig::default()).unwrap();
        assert_eq!(plan.len(), 1);
        assert_eq!((plan[0].start_frame, plan[0].end_frame), (0, t.total_frames));
        assert_eq!(plan[0].crop_box.side, 300.0);
        assert_eq!(plan[0].output_size, 1024);
    }

    #[test]
    fn linear_drift_cuts_at_first_band_entry() {
        let checks: Vec<_> = (0..40).map(|k| square_face(900.0 + 4.0 * k as f64, 500.0, 100.0)).collect();
        let t = track(checks);
        let plan = crop_plan(&t, &CropConfig::default()).unwrap();
        // Box [750, 1050], band 15 px: right edge (1000 + 4k) must stay below 1035.
        let k = (0..40).find(|&k| 1000.0 + 4.0 * k as f64 > 1035.0).unwrap();
        assert_eq!(plan[1].start_frame, k * 6);
        let cuts: Vec<usize> = plan[1..].iter().map(|s| s.start_frame).collect();
        assert_eq!(cuts, simulate_cuts(&t, 0.25, 0.05));
    }

    #[test]
    fn two_drift_episodes_give_three_segments() {
        let mut checks = vec![];
        let mut x = 900.0;
        for k in 0..60 {
            if (10..15).contains(&k) || (35..40).contains(&k) {
                x += 10.0;
            }
            checks.push(square_face(x, 500.0, 100.0));
        }
        let t = track(checks);
        let plan = crop_plan(&t, &CropConfig::default()).unwrap();
        assert_eq!(plan.len(), 3);
        let cuts: Vec<usize> = plan[1..].iter().map(|s| s.start_frame).collect();
        assert_eq!(cuts, simulate_cuts(&t, 0.25, 0.05));
    }

    #[test]
    fn oversized_face_is_rejected() {
        let t = track(vec![square_face(960.0, 540.0, 400.0)]);
        assert!(crop_plan(&t, &CropConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn plan_invariants(seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut c = [900.0, 500.0];
            let checks: Vec<_> = (0..80).map(|_| {
                c[0] = (c[0] + rng.random_range(-15.0..15.0f64)).clamp(200.0, 1700.0);
                c[1] = (c[1] + rng.random_range(-10.0..10.0f64)).clamp(200.0, 880.0);
                square_face(c[0], c[1], 80.0)
            }).collect();
            let t = track(checks);
            let plan = crop_plan(&t, &CropConfig::default()).unwrap();
            prop_assert_eq!(plan[0].start_frame, 0);
            prop_assert_eq!(plan.last().unwrap().end_frame, t.total_frames);
            for w in plan.windows(2) {
                prop_assert_eq!(w[0].end_frame, w[1].start_frame);
            }
            for s in &plan {
                let b = s.crop_box;
                prop_assert!(s.start_frame < s.end_frame);
                prop_assert!(b.x >= 0.0 && b.y >= 0.0);
                prop_assert!(b.x + b.side <= t.frame_width && b.y + b.side <= t.frame_height);
                let opening = &t.checks[s.start_frame / 6];
                prop_assert!(opening.iter().all(|&p| b.border_distance(p) >= 0.0));
            }
            let cuts: Vec<usize> = plan[1..].iter().map(|s| s.start_frame).collect();
            prop_assert_eq!(cuts, simulate_cuts(&t, 0.25, 0.05));
        }
    }
}
