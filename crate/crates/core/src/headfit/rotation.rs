//! Axis-angle rotations and their derivatives on plain 3x3 arrays.

use crate::scalar::Scalar;

pub type Vec3<T> = [T; 3];
pub type Mat3<T> = [[T; 3]; 3];

pub fn identity<T: Scalar>() -> Mat3<T> {
    let (o, z) = (T::one(), T::zero());
    [[o, z, z], [z, o, z], [z, z, o]]
}

pub fn skew<T: Scalar>(v: Vec3<T>) -> Mat3<T> {
    let z = T::zero();
    [[z, -v[2], v[1]], [v[2], z, -v[0]], [-v[1], v[0], z]]
}

pub fn mat_mul<T: Scalar>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, o) in row.iter_mut().enumerate() {
            *o = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat_vec<T: Scalar>(m: &Mat3<T>, v: Vec3<T>) -> Vec3<T> {
    [0, 1, 2].map(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

fn lin_comb<T: Scalar>(a: T, k: &Mat3<T>, b: T, k2: &Mat3<T>) -> Mat3<T> {
    let mut out = identity::<T>();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] += a * k[i][j] + b * k2[i][j];
        }
    }
    out
}

/// `(sin t / t, (1 - cos t) / t^2, (t - sin t) / t^3)` with series near zero.
fn coefficients<T: Scalar>(w: Vec3<T>) -> (T, T, T) {
    let t2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
    if t2 < T::of(1e-8) {
        (
            T::one() - t2 / T::of(6.0),
            T::of(0.5) - t2 / T::of(24.0),
            T::of(1.0 / 6.0) - t2 / T::of(120.0),
        )
    } else {
        let t = t2.sqrt();
        (t.sin() / t, (T::one() - t.cos()) / t2, (t - t.sin()) / (t2 * t))
    }
}

/// Rodrigues: `exp([w]x)`.
pub fn rotation<T: Scalar>(w: Vec3<T>) -> Mat3<T> {
    let (a, b, _) = coefficients(w);
    let k = skew(w);
    lin_comb(a, &k, b, &mat_mul(&k, &k))
}

/// Right Jacobian of the exponential map.
pub fn right_jacobian<T: Scalar>(w: Vec3<T>) -> Mat3<T> {
    let (_, b, c) = coefficients(w);
    let k = skew(w);
    lin_comb(-b, &k, c, &mat_mul(&k, &k))
}

/// `d(R(w) x) / dw = -R [x]x J_r(w)`; column `j` is the derivative along `w_j`.
pub fn rotate_derivative<T: Scalar>(w: Vec3<T>, r: &Mat3<T>, x: Vec3<T>) -> Mat3<T> {
    let rx = mat_mul(r, &skew(x));
    let mut out = mat_mul(&rx, &right_jacobian(w));
    for row in &mut out {
        for v in row.iter_mut() {
            *v = -*v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_is_orthonormal_and_matches_axis_formula() {
        let w: Vec3<f64> = [0.3, -0.5, 0.8];
        let r = rotation(w);
        let rt = [0, 1, 2].map(|i| [0, 1, 2].map(|j| r[j][i]));
        let p = mat_mul(&r, &rt);
        for (i, row) in p.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        // v cos t + (k x v) sin t + k (k.v)(1 - cos t)
        let t = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2] as f64).sqrt();
        let k = w.map(|c| c / t);
        let v = [0.1, 0.2, -0.7];
        let kv = k[0] * v[0] + k[1] * v[1] + k[2] * v[2];
        let cross = [k[1] * v[2] - k[2] * v[1], k[2] * v[0] - k[0] * v[2], k[0] * v[1] - k[1] * v[0]];
        let expected = [0, 1, 2].map(|i| v[i] * t.cos() + cross[i] * t.sin() + k[i] * kv * (1.0 - t.cos()));
        let got = mat_vec(&r, v);
        for i in 0..3 {
            assert!((got[i] - expected[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let x: Vec3<f64> = [0.4, -0.1, 0.25];
        for w in [[0.3f64, -0.5, 0.8], [1e-6, 2e-6, -1e-6], [0.0, 0.0, 0.0], [2.0, 0.1, -1.0]] {
            let d = rotate_derivative(w, &rotation(w), x);
            for j in 0..3 {
                let h = 1e-6;
                let (mut wp, mut wm) = (w, w);
                wp[j] += h;
                wm[j] -= h;
                let (p, m) = (mat_vec(&rotation(wp), x), mat_vec(&rotation(wm), x));
                for i in 0..3 {
                    let fd = (p[i] - m[i]) / (2.0 * h);
                    assert!((fd - d[i][j]).abs() < 1e-8, "w={w:?} i={i} j={j}: {fd} vs {}", d[i][j]);
                }
            }
        }
    }
}
