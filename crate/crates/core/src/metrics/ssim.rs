use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range of pixel values (1.0 for `[0, 1]` images, 255.0 for 8-bit).
    pub data_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            data_range: 1.0,
        }
    }
}

fn gaussian_kernel<T: Scalar>(size: usize, sigma: f64) -> Vec<T> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| T::of(v / total)).collect()
}

/// Separable "valid" filtering: output is `(h - k + 1) x (w - k + 1)`.
fn filter_valid<T: Scalar>(img: &Matrix<T>, kernel: &[T]) -> Matrix<T> {
    let k = kernel.len();
    let (h, w) = img.shape();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let horiz = Matrix::from_fn(h, ow, |r, c| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, &kv)| kv * img[(r, c + i)])
            .sum()
    });
    Matrix::from_fn(oh, ow, |r, c| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, &kv)| kv * horiz[(r + i, c)])
            .sum()
    })
}

/// Mean SSIM of two single-channel images under a Gaussian window.
pub fn ssim<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, config: &SsimConfig) -> Result<T> {
    if a.shape() != b.shape() {
        return Err(Error::validation(format!(
            "SSIM inputs differ in size: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (h, w) = a.shape();
    if h < config.window || w < config.window {
        return Err(Error::validation(format!(
            "image {h}x{w} is smaller than the {0}x{0} SSIM window",
            config.window
        )));
    }
    let kernel = gaussian_kernel::<T>(config.window, config.sigma);
    let c1 = T::of((config.k1 * config.data_range).powi(2));
    let c2 = T::of((config.k2 * config.data_range).powi(2));
    let two = T::of(2.0);

    let mu_a = filter_valid(a, &kernel);
    let mu_b = filter_valid(b, &kernel);
    let aa = filter_valid(&a.zip_map(a, |x, y| x * y), &kernel);
    let bb = filter_valid(&b.zip_map(b, |x, y| x * y), &kernel);
    let ab = filter_valid(&a.zip_map(b, |x, y| x * y), &kernel);

    let n = mu_a.len();
    let mut total = T::zero();
    for i in 0..n {
        let (ma, mb) = (mu_a.as_slice()[i], mu_b.as_slice()[i]);
        let va = aa.as_slice()[i] - ma * ma;
        let vb = bb.as_slice()[i] - mb * mb;
        let cov = ab.as_slice()[i] - ma * mb;
        let num = (two * ma * mb + c1) * (two * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        total += num / den;
    }
    Ok(total / T::of_usize(n))
}

/// Per-channel SSIM averaged over channels.
pub fn ssim_channels<T: Scalar>(a: &[Matrix<T>], b: &[Matrix<T>], config: &SsimConfig) -> Result<T> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::validation("SSIM channel counts must match and be non-zero"));
    }
    let mut total = T::zero();
    for (x, y) in a.iter().zip(b) {
        total += ssim(x, y, config)?;
    }
    Ok(total / T::of_usize(a.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(seed: u64, h: usize, w: usize) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(h, w, |_, _| rng.random_range(0.0..1.0))
    }

    #[test]
    fn self_similarity_is_one() {
        let x = noise(1, 24, 30);
        assert!((ssim(&x, &x, &SsimConfig::default()).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constants_reduce_to_luminance_term() {
        let cfg = SsimConfig::default();
        let (a, b) = (0.2, 0.7);
        let got = ssim(&Matrix::filled(16, 16, a), &Matrix::filled(16, 16, b), &cfg).unwrap();
        let c1 = (0.01f64).powi(2);
        let expected = (2.0 * a * b + c1) / (a * a + b * b + c1);
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        assert!(got < 1.0);
    }

    #[test]
    fn symmetric_and_bounded() {
        let (x, y) = (noise(2, 20, 20), noise(3, 20, 20));
        let cfg = SsimConfig::default();
        let (s1, s2) = (ssim(&x, &y, &cfg).unwrap(), ssim(&y, &x, &cfg).unwrap());
        assert_eq!(s1, s2);
        assert!((-1.0..=1.0).contains(&s1));
        let neg = x.map(|v| 1.0 - v);
        let s3 = ssim(&x, &neg, &cfg).unwrap();
        assert!((-1.0..=1.0).contains(&s3) && s3 < 0.0);
    }

    #[test]
    fn size_mismatch_and_tiny_images_fail() {
        let cfg = SsimConfig::default();
        assert!(ssim(&noise(1, 12, 12), &noise(1, 12, 13), &cfg).is_err());
        assert!(ssim(&noise(1, 8, 8), &noise(1, 8, 8), &cfg).is_err());
    }
}
