//! Training objectives and their analytic gradients.
//!
//! The matrix-level functions here are the single implementation of the
//! motion distance: the evaluation metrics call [`mean_squared_distance`]
//! directly.

use serde::{Deserialize, Serialize};

use crate::cvae::LatentDistribution;
use crate::error::{Error, Result};
use crate::motion::MotionSequence;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

fn check_same_shape<T: Scalar>(pred: &Matrix<T>, gt: &Matrix<T>) -> Result<()> {
    if pred.shape() != gt.shape() {
        return Err(Error::validation(format!(
            "shape mismatch: prediction {:?} vs ground truth {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    if pred.is_empty() {
        return Err(Error::validation("cannot compare empty sequences"));
    }
    Ok(())
}

/// Mean over all frames and dimensions of the squared difference.
pub fn mean_squared_distance<T: Scalar>(pred: &Matrix<T>, gt: &Matrix<T>) -> Result<T> {
    check_same_shape(pred, gt)?;
    let sum: T = pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .map(|(&p, &g)| (p - g) * (p - g))
        .sum();
    Ok(sum / T::of_usize(pred.len()))
}

pub fn mean_squared_distance_grad<T: Scalar>(pred: &Matrix<T>, gt: &Matrix<T>) -> Result<Matrix<T>> {
    check_same_shape(pred, gt)?;
    let k = T::of(2.0) / T::of_usize(pred.len());
    Ok(pred.zip_map(gt, |p, g| k * (p - g)))
}

/// Mean squared difference of first-order frame differences.
pub fn velocity_distance<T: Scalar>(pred: &Matrix<T>, gt: &Matrix<T>) -> Result<T> {
    check_same_shape(pred, gt)?;
    let (frames, dims) = pred.shape();
    if frames < 2 {
        return Err(Error::validation("velocity loss needs at least two frames"));
    }
    let mut sum = T::zero();
    for t in 0..frames - 1 {
        for c in 0..dims {
            let e = (pred[(t + 1, c)] - pred[(t, c)]) - (gt[(t + 1, c)] - gt[(t, c)]);
            sum += e * e;
        }
    }
    Ok(sum / T::of_usize((frames - 1) * dims))
}

pub fn velocity_distance_grad<T: Scalar>(pred: &Matrix<T>, gt: &Matrix<T>) -> Result<Matrix<T>> {
    check_same_shape(pred, gt)?;
    let (frames, dims) = pred.shape();
    if frames < 2 {
        return Err(Error::validation("velocity loss needs at least two frames"));
    }
    let k = T::of(2.0) / T::of_usize((frames - 1) * dims);
    let mut grad = Matrix::zeros(frames, dims);
    for t in 0..frames - 1 {
        for c in 0..dims {
            let e = (pred[(t + 1, c)] - pred[(t, c)]) - (gt[(t + 1, c)] - gt[(t, c)]);
            grad[(t + 1, c)] += k * e;
            grad[(t, c)] -= k * e;
        }
    }
    Ok(grad)
}

fn check_sigma<T: Scalar>(mu: &[T], sigma: &[T]) -> Result<()> {
    if mu.len() != sigma.len() {
        return Err(Error::dims("latent sigma", mu.len(), sigma.len()));
    }
    if sigma.iter().any(|&s| !(s > T::zero())) {
        return Err(Error::validation("latent sigma must be strictly positive"));
    }
    Ok(())
}

/// `KL(N(mu, diag(sigma^2)) || N(0, I))`.
pub fn kl_standard_normal<T: Scalar>(mu: &[T], sigma: &[T]) -> Result<T> {
    check_sigma(mu, sigma)?;
    let half = T::of(0.5);
    Ok(mu
        .iter()
        .zip(sigma)
        .map(|(&m, &s)| half * (m * m + s * s - T::one() - (s * s).ln()))
        .sum())
}

/// Gradients of [`kl_standard_normal`] with respect to `(mu, sigma)`.
pub fn kl_standard_normal_grad<T: Scalar>(mu: &[T], sigma: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    check_sigma(mu, sigma)?;
    Ok((mu.to_vec(), sigma.iter().map(|&s| s - s.recip()).collect()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub reconstruction: f64,
    pub velocity: f64,
    pub kl: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            reconstruction: 1.0,
            velocity: 1.0,
            kl: 1e-4,
        }
    }
}

impl LossWeights {
    pub fn new(reconstruction: f64, velocity: f64, kl: f64) -> Result<Self> {
        let w = Self {
            reconstruction,
            velocity,
            kl,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.reconstruction, self.velocity, self.kl];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::validation("loss weights must be finite and non-negative"));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(Error::validation("at least one loss weight must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    pub velocity: f64,
    pub kl: f64,
    pub total: f64,
}

pub fn loss_reconstruction<T: Scalar>(pred: &MotionSequence<T>, gt: &MotionSequence<T>) -> Result<T> {
    mean_squared_distance(pred.as_matrix(), gt.as_matrix())
}

pub fn loss_velocity<T: Scalar>(pred: &MotionSequence<T>, gt: &MotionSequence<T>) -> Result<T> {
    velocity_distance(pred.as_matrix(), gt.as_matrix())
}

pub fn loss_kl<T: Scalar>(dist: &LatentDistribution<T>) -> Result<T> {
    kl_standard_normal(dist.mu(), dist.sigma())
}

/// Weighted composite objective. A zero weight skips its term, so a
/// one-frame sequence is fine when the velocity weight is zero.
pub fn loss_total<T: Scalar>(
    pred: &MotionSequence<T>,
    gt: &MotionSequence<T>,
    dist: &LatentDistribution<T>,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    weights.validate()?;
    let rc = loss_reconstruction(pred, gt)?.to_f64_lossy();
    let vel = if weights.velocity > 0.0 {
        loss_velocity(pred, gt)?.to_f64_lossy()
    } else {
        0.0
    };
    let kl = loss_kl(dist)?.to_f64_lossy();
    Ok(LossBreakdown {
        reconstruction: rc,
        velocity: vel,
        kl,
        total: weights.reconstruction * rc + weights.velocity * vel + weights.kl * kl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix<f64> {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn reconstruction_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (p, g) = (random(&mut rng, 3, 4), random(&mut rng, 3, 4));
        let mut acc = 0.0;
        for t in 0..3 {
            for c in 0..4 {
                acc += (p[(t, c)] - g[(t, c)]).powi(2);
            }
        }
        assert!((mean_squared_distance(&p, &g).unwrap() - acc / 12.0).abs() < 1e-12);
    }

    #[test]
    fn unit_offset_gives_unit_reconstruction() {
        let g = Matrix::from_fn(5, 100, |r, c| (r + c) as f64 * 0.01);
        let p = g.map(|v| v + 1.0);
        assert!((mean_squared_distance(&p, &g).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(mean_squared_distance(&g, &g).unwrap(), 0.0);
    }

    #[test]
    fn velocity_matches_brute_force_and_ignores_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (p, g) = (random(&mut rng, 3, 4), random(&mut rng, 3, 4));
        let mut acc = 0.0;
        for t in 1..3 {
            for c in 0..4 {
                let vp = p[(t, c)] - p[(t - 1, c)];
                let vg = g[(t, c)] - g[(t - 1, c)];
                acc += (vp - vg).powi(2);
            }
        }
        assert!((velocity_distance(&p, &g).unwrap() - acc / 8.0).abs() < 1e-12);

        let shifted = g.map(|v| v + 0.75);
        assert!(velocity_distance(&shifted, &g).unwrap().abs() < 1e-24);
        assert!(velocity_distance(&Matrix::<f64>::zeros(1, 4), &Matrix::zeros(1, 4)).is_err());
    }

    #[test]
    fn kl_closed_form_values() {
        assert_eq!(kl_standard_normal(&[0.0f64; 8], &[1.0; 8]).unwrap(), 0.0);
        assert!((kl_standard_normal(&[1.0f64], &[1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(kl_standard_normal(&[0.0f64], &[0.0]).is_err());
        assert!(kl_standard_normal(&[0.0f64], &[-1.0]).is_err());
    }

    #[test]
    fn kl_is_non_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let d = rng.random_range(1..16);
            let mu: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let sigma: Vec<f64> = (0..d).map(|_| rng.random_range(0.01..4.0)).collect();
            assert!(kl_standard_normal(&mu, &sigma).unwrap() >= 0.0);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = Matrix::<f64>::zeros(3, 4);
        let b = Matrix::<f64>::zeros(4, 4);
        assert!(mean_squared_distance(&a, &b).is_err());
        assert!(velocity_distance_grad(&a, &b).is_err());
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::new(0.0, 0.0, 0.0).is_err());
        assert!(LossWeights::new(-1.0, 1.0, 0.0).is_err());
        assert!(LossWeights::new(1.0, 0.0, 0.0).is_ok());
    }
}
