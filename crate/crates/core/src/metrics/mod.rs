//! Evaluation metrics.
//!
//! Motion metrics use the element-mean squared distance shared with the
//! reconstruction loss. Image metrics (LMD, SSIM, FID) live in submodules.

mod fid;
mod lmd;
mod ssim;

pub use fid::{fid, fid_with_regularizer, GaussianFit, FID_REGULARIZER};
pub use lmd::{lmd, LandmarkTrack, LANDMARK_COUNT, MOUTH_INDICES};
pub use ssim::{ssim, ssim_channels, SsimConfig};

use crate::error::{Error, Result};
use crate::motion::MotionSequence;
use crate::scalar::Scalar;
use crate::training::losses::mean_squared_distance;

/// Generated samples for one conditioning input.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet<T> {
    samples: Vec<MotionSequence<T>>,
}

impl<T: Scalar> SampleSet<T> {
    pub fn new(samples: Vec<MotionSequence<T>>) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::validation("sample set must contain at least one sequence"));
        };
        let shape = first.as_matrix().shape();
        if let Some(bad) = samples.iter().find(|s| s.as_matrix().shape() != shape) {
            return Err(Error::validation(format!(
                "sample set shapes differ: {:?} vs {:?}",
                shape,
                bad.as_matrix().shape()
            )));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[MotionSequence<T>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// First `n` samples as a new set.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        Self::new(self.samples[..n.min(self.samples.len())].to_vec())
    }
}

/// Element-mean squared distance between two sequences.
pub fn motion_distance<T: Scalar>(a: &MotionSequence<T>, b: &MotionSequence<T>) -> Result<T> {
    mean_squared_distance(a.as_matrix(), b.as_matrix())
}

fn distances_to<T: Scalar>(set: &SampleSet<T>, gt: &MotionSequence<T>) -> Result<Vec<T>> {
    set.samples.iter().map(|s| motion_distance(s, gt)).collect()
}

pub fn min_dist<T: Scalar>(set: &SampleSet<T>, gt: &MotionSequence<T>) -> Result<T> {
    Ok(distances_to(set, gt)?
        .into_iter()
        .fold(T::infinity(), T::min))
}

/// Accumulated as `min + mean(d - min)` so `min_dist <= mean_dist` holds in
/// floating point too, with equality for a single sample.
pub fn mean_dist<T: Scalar>(set: &SampleSet<T>, gt: &MotionSequence<T>) -> Result<T> {
    let d = distances_to(set, gt)?;
    let lo = d.iter().copied().fold(T::infinity(), T::min);
    let excess: T = d.iter().map(|&v| v - lo).sum();
    Ok(lo + excess / T::of_usize(d.len()))
}

/// Average distance over ordered pairs of distinct samples.
pub fn apd<T: Scalar>(set: &SampleSet<T>) -> Result<T> {
    let n = set.len();
    if n < 2 {
        return Err(Error::validation("APD needs at least two samples"));
    }
    let mut sum = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            sum += motion_distance(&set.samples[i], &set.samples[j])?;
        }
    }
    Ok(T::of(2.0) * sum / T::of_usize(n * (n - 1)))
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct MotionScores {
    pub min_dist: f64,
    pub mean_dist: f64,
    /// `None` for single-sample sets.
    pub apd: Option<f64>,
}

pub fn motion_scores<T: Scalar>(set: &SampleSet<T>, gt: &MotionSequence<T>) -> Result<MotionScores> {
    Ok(MotionScores {
        min_dist: min_dist(set, gt)?.to_f64_lossy(),
        mean_dist: mean_dist(set, gt)?.to_f64_lossy(),
        apd: if set.len() >= 2 {
            Some(apd(set)?.to_f64_lossy())
        } else {
            None
        },
    })
}
