use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Diagonal jitter added to both covariances before the matrix square root.
pub const FID_REGULARIZER: f64 = 1e-6;

/// Mean and unbiased covariance of an embedding set.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianFit {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianFit {
    /// `embeds` holds one embedding per row.
    pub fn from_rows<T: Scalar>(embeds: &Matrix<T>) -> Result<Self> {
        let (n, e) = embeds.shape();
        if n < 2 {
            return Err(Error::validation("FID needs at least two embeddings per set"));
        }
        if e == 0 {
            return Err(Error::validation("embeddings must have positive width"));
        }
        let x = DMatrix::from_fn(n, e, |r, c| embeds[(r, c)].to_f64_lossy());
        let mean = DVector::from_fn(e, |c, _| x.column(c).sum() / n as f64);
        let mut centered = x;
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let cov = centered.transpose() * &centered / (n as f64 - 1.0);
        Ok(Self { mean, cov })
    }
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Frechet distance between Gaussian fits of two embedding sets.
pub fn fid<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<f64> {
    fid_with_regularizer(a, b, FID_REGULARIZER)
}

pub fn fid_with_regularizer<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, eps: f64) -> Result<f64> {
    if a.cols() != b.cols() {
        return Err(Error::dims("FID embedding width", a.cols(), b.cols()));
    }
    let fa = GaussianFit::from_rows(a)?;
    let fb = GaussianFit::from_rows(b)?;
    let e = a.cols();
    let jitter = DMatrix::<f64>::identity(e, e) * eps;
    let ca = &fa.cov + &jitter;
    let cb = &fb.cov + &jitter;

    // tr((Ca Cb)^1/2) = tr((Ca^1/2 Cb Ca^1/2)^1/2), the inner product being symmetric PSD.
    let ra = psd_sqrt(&ca);
    let inner = &ra * &cb * &ra;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .sum();

    let mean_term = (&fa.mean - &fb.mean).norm_squared();
    let value = mean_term + ca.trace() + cb.trace() - 2.0 * cross;
    Ok(value.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64, n: usize, e: usize, shift: f64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, e, |_, c| rng.random_range(-1.0..1.0) * (1.0 + c as f64) + shift)
    }

    #[test]
    fn identical_sets_score_zero() {
        let a = random(1, 40, 5, 0.0);
        assert!(fid(&a, &a).unwrap() < 1e-6);
    }

    #[test]
    fn one_dimensional_closed_form() {
        let a = Matrix::from_vec(4, 1, vec![0.0, 0.0, 2.0, 2.0]);
        let b = Matrix::from_vec(4, 1, vec![1.0, 1.0, 3.0, 3.0]);
        assert!((fid(&a, &b).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn symmetric() {
        let a = random(2, 30, 4, 0.0);
        let b = random(3, 25, 4, 0.5);
        let (x, y) = (fid(&a, &b).unwrap(), fid(&b, &a).unwrap());
        assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        assert!(x > 0.0);
    }

    #[test]
    fn rank_deficient_sets_stay_finite() {
        // Fewer samples than dimensions: singular covariances.
        let a = random(4, 3, 6, 0.0);
        let b = random(5, 3, 6, 0.2);
        let v = fid(&a, &b).unwrap();
        assert!(v.is_finite() && v >= 0.0);
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let a = Matrix::from_vec(1, 2, vec![0.0, 1.0]);
        assert!(fid(&a, &a).is_err());
        assert!(fid(&random(1, 5, 2, 0.0), &random(1, 5, 3, 0.0)).is_err());
    }
}
