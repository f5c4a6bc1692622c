use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const LANDMARK_COUNT: usize = 68;

/// Outer (48..60) and inner (60..68) lip contour of the 68-point layout.
pub const MOUTH_INDICES: std::ops::Range<usize> = 48..68;

/// Per-frame 2D landmarks in pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkTrack<T> {
    pub frames: Vec<Vec<[T; 2]>>,
    #[serde(default = "default_mouth")]
    pub mouth: Vec<usize>,
}

fn default_mouth() -> Vec<usize> {
    MOUTH_INDICES.collect()
}

impl<T: Scalar> LandmarkTrack<T> {
    /// 68-point frames with the standard lip subset.
    pub fn new(frames: Vec<Vec<[T; 2]>>) -> Result<Self> {
        Self::with_subset(frames, default_mouth())
    }

    pub fn with_subset(frames: Vec<Vec<[T; 2]>>, mouth: Vec<usize>) -> Result<Self> {
        let points = frames.first().map_or(0, Vec::len);
        if frames.iter().any(|f| f.len() != points) {
            return Err(Error::validation("landmark frames have inconsistent point counts"));
        }
        if let Some(&bad) = mouth.iter().find(|&&i| i >= points && !frames.is_empty()) {
            return Err(Error::validation(format!(
                "mouth index {bad} out of range for {points} points"
            )));
        }
        Ok(Self { frames, mouth })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Mean Euclidean distance over frames and mouth points.
pub fn lmd<T: Scalar>(pred: &LandmarkTrack<T>, gt: &LandmarkTrack<T>) -> Result<T> {
    if pred.len() != gt.len() {
        return Err(Error::validation(format!(
            "landmark tracks differ in length: {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::validation("landmark tracks are empty"));
    }
    if pred.frames[0].len() != gt.frames[0].len() {
        return Err(Error::validation("landmark tracks differ in point count"));
    }
    if pred.mouth != gt.mouth || pred.mouth.is_empty() {
        return Err(Error::validation("landmark tracks must share a non-empty mouth subset"));
    }
    let mut sum = T::zero();
    for (pf, gf) in pred.frames.iter().zip(&gt.frames) {
        for &i in &pred.mouth {
            let dx = pf[i][0] - gf[i][0];
            let dy = pf[i][1] - gf[i][1];
            sum += (dx * dx + dy * dy).sqrt();
        }
    }
    Ok(sum / T::of_usize(pred.len() * pred.mouth.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_track(rng: &mut ChaCha8Rng, frames: usize) -> LandmarkTrack<f64> {
        LandmarkTrack::new(
            (0..frames)
                .map(|_| {
                    (0..LANDMARK_COUNT)
                        .map(|_| [rng.random_range(0.0..512.0), rng.random_range(0.0..512.0)])
                        .collect()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_tracks_have_zero_lmd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_track(&mut rng, 4);
        assert_eq!(lmd(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn horizontal_shift_of_three_pixels() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gt = random_track(&mut rng, 5);
        let shifted = LandmarkTrack::new(
            gt.frames
                .iter()
                .map(|f| f.iter().map(|p| [p[0] + 3.0, p[1]]).collect())
                .collect(),
        )
        .unwrap();
        assert!((lmd(&shifted, &gt).unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let frames = rng.random_range(1..6);
            let (a, b) = (random_track(&mut rng, frames), random_track(&mut rng, frames));
            let mut acc = 0.0;
            for t in 0..frames {
                for i in 48..68 {
                    acc += ((a.frames[t][i][0] - b.frames[t][i][0]).powi(2)
                        + (a.frames[t][i][1] - b.frames[t][i][1]).powi(2))
                    .sqrt();
                }
            }
            assert!((lmd(&a, &b).unwrap() - acc / (frames * 20) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(lmd(&random_track(&mut rng, 2), &random_track(&mut rng, 3)).is_err());
        assert!(LandmarkTrack::new(vec![vec![[0.0f64, 0.0]; 10]]).is_err());
    }
}
