use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Periodic positional encoding: the usual sinusoid table evaluated at
/// `t mod period`, so row `t` equals row `t + period` bit for bit.
pub fn ppe<T: Scalar>(rows: usize, d_model: usize, period: usize) -> Matrix<T> {
    assert!(period >= 1, "PPE period must be at least 1");
    let freqs: Vec<f64> = (0..d_model.div_ceil(2))
        .map(|i| (-(2.0 * i as f64) * 10_000f64.ln() / d_model as f64).exp())
        .collect();
    Matrix::from_fn(rows, d_model, |t, c| {
        let pos = (t % period) as f64;
        let angle = pos * freqs[c / 2];
        T::of(if c % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}
