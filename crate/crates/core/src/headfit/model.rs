use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::rotation::{mat_vec, rotation, Vec3};
use crate::container::{Container, NamedArray};
use crate::error::{ensure_dim, Error, Result};
use crate::motion::{CameraParams, EXPRESSION_DIM, POSE_DIM, SHAPE_DIM};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

pub const VERTEX_COUNT: usize = 500;
pub const MODEL_LANDMARKS: usize = 68;
/// Seed of the bundled toy head.
pub const DEFAULT_MODEL_SEED: u64 = 20_240_917;

const HEAD_AXES: [f64; 3] = [0.075, 0.10, 0.085];
const JAW_PIVOT: [f64; 3] = [0.0, -0.02, -0.04];
const JAW_TOP: f64 = -0.03;
const JAW_RAMP: f64 = 0.04;
const BASIS_SCALE: f64 = 0.08;
const KIND: &str = "headmodel";

/// Linear blendshape head with a skinned jaw and a global rotation.
///
/// Bases are stored as `3V x K` with row `3 * v + axis`.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyHeadModel<T> {
    template: Matrix<T>,
    shape_basis: Matrix<T>,
    expression_basis: Matrix<T>,
    jaw_pivot: Vec3<T>,
    jaw_weights: Vec<T>,
    landmarks: Vec<usize>,
}

fn orthonormal_columns(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng));
    g.qr().q()
}

fn scaled_basis(q: &DMatrix<f64>) -> Matrix<f64> {
    Matrix::from_fn(q.nrows(), q.ncols(), |r, c| {
        q[(r, c)] * BASIS_SCALE / ((c + 1) as f64).sqrt()
    })
}

/// 68-point layout in normalized face coordinates: jaw, brows, nose, eyes, lips.
fn landmark_layout() -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(MODEL_LANDMARKS);
    for i in 0..17 {
        let a = PI + PI * i as f64 / 16.0;
        pts.push([0.9 * a.cos(), 0.9 * a.sin()]);
    }
    for side in [-1.0, 1.0] {
        for i in 0..5 {
            pts.push([side * (0.2 + 0.125 * i as f64), 0.55]);
        }
    }
    for i in 0..4 {
        pts.push([0.0, 0.4 - 0.13 * i as f64]);
    }
    for i in 0..5 {
        pts.push([-0.2 + 0.1 * i as f64, -0.1]);
    }
    for cx in [-0.4, 0.4] {
        for i in 0..6 {
            let a = 2.0 * PI * i as f64 / 6.0;
            pts.push([cx + 0.12 * a.cos(), 0.35 + 0.12 * a.sin()]);
        }
    }
    for i in 0..12 {
        let a = 2.0 * PI * i as f64 / 12.0;
        pts.push([0.35 * a.cos(), -0.45 + 0.15 * a.sin()]);
    }
    for i in 0..8 {
        let a = 2.0 * PI * i as f64 / 8.0;
        pts.push([0.2 * a.cos(), -0.45 + 0.06 * a.sin()]);
    }
    pts
}

impl ToyHeadModel<f64> {
    /// Builds the deterministic toy head for `seed`.
    pub fn generate(seed: u64) -> Self {
        let golden = PI * (3.0 - 5f64.sqrt());
        let template = Matrix::from_fn(VERTEX_COUNT, 3, |i, axis| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / VERTEX_COUNT as f64;
            let r = (1.0 - y * y).sqrt();
            let phi = golden * i as f64;
            HEAD_AXES[axis] * [r * phi.cos(), y, r * phi.sin()][axis]
        });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape_basis = scaled_basis(&orthonormal_columns(3 * VERTEX_COUNT, SHAPE_DIM, &mut rng));
        let expression_basis =
            scaled_basis(&orthonormal_columns(3 * VERTEX_COUNT, EXPRESSION_DIM, &mut rng));
        let jaw_weights = (0..VERTEX_COUNT)
            .map(|i| ((JAW_TOP - template[(i, 1)]) / JAW_RAMP).clamp(0.0, 1.0))
            .collect();

        let mut used = vec![false; VERTEX_COUNT];
        let landmarks = landmark_layout()
            .into_iter()
            .map(|[u, v]| {
                let target = [u * HEAD_AXES[0] * 0.8, v * HEAD_AXES[1] * 0.8];
                let best = (0..VERTEX_COUNT)
                    .filter(|&i| !used[i] && template[(i, 2)] > 0.0)
                    .min_by(|&a, &b| {
                        let d = |i: usize| {
                            (template[(i, 0)] - target[0]).powi(2) + (template[(i, 1)] - target[1]).powi(2)
                        };
                        d(a).total_cmp(&d(b))
                    })
                    .expect("front hemisphere has more vertices than landmarks");
                used[best] = true;
                best
            })
            .collect();

        Self {
            template,
            shape_basis,
            expression_basis,
            jaw_pivot: JAW_PIVOT,
            jaw_weights,
            landmarks,
        }
    }
}

impl<T: Scalar> ToyHeadModel<T> {
    pub fn vertex_count(&self) -> usize {
        self.template.rows()
    }

    pub fn template(&self) -> &Matrix<T> {
        &self.template
    }

    pub fn shape_basis(&self) -> &Matrix<T> {
        &self.shape_basis
    }

    pub fn expression_basis(&self) -> &Matrix<T> {
        &self.expression_basis
    }

    pub fn jaw_pivot(&self) -> Vec3<T> {
        self.jaw_pivot
    }

    pub fn jaw_weights(&self) -> &[T] {
        &self.jaw_weights
    }

    pub fn landmark_indices(&self) -> &[usize] {
        &self.landmarks
    }

    pub fn cast<U: Scalar>(&self) -> ToyHeadModel<U> {
        ToyHeadModel {
            template: self.template.cast(),
            shape_basis: self.shape_basis.cast(),
            expression_basis: self.expression_basis.cast(),
            jaw_pivot: self.jaw_pivot.map(|v| U::of(v.to_f64_lossy())),
            jaw_weights: self.jaw_weights.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
            landmarks: self.landmarks.clone(),
        }
    }

    /// Template plus the shape and expression offsets of vertex `i`.
    pub(crate) fn rest_vertex(&self, i: usize, shape: &[T], expression: &[T]) -> Vec3<T> {
        [0, 1, 2].map(|a| {
            let r = 3 * i + a;
            let s: T = self.shape_basis.row(r).iter().zip(shape).map(|(&b, &x)| b * x).sum();
            let e: T = self.expression_basis.row(r).iter().zip(expression).map(|(&b, &x)| b * x).sum();
            self.template[(i, a)] + s + e
        })
    }

    /// Jaw skinning then global rotation of one rest-pose vertex.
    pub(crate) fn articulate(&self, i: usize, rest: Vec3<T>, jaw: &super::rotation::Mat3<T>, global: &super::rotation::Mat3<T>) -> Vec3<T> {
        let w = self.jaw_weights[i];
        let p = self.jaw_pivot;
        let d = [0, 1, 2].map(|a| rest[a] - p[a]);
        // rest + w (R - I)(rest - p): a zero jaw rotation leaves the vertex bit-exact.
        let v1 = [0, 1, 2].map(|a| {
            let moved: T = (0..3).map(|b| (jaw[a][b] - if a == b { T::one() } else { T::zero() }) * d[b]).sum();
            rest[a] + w * moved
        });
        mat_vec(global, v1)
    }

    fn check_params(shape: &[T], expression: &[T], pose: &[T]) -> Result<()> {
        ensure_dim("shape parameters", SHAPE_DIM, shape.len())?;
        ensure_dim("expression parameters", EXPRESSION_DIM, expression.len())?;
        ensure_dim("pose parameters", POSE_DIM, pose.len())
    }

    fn evaluate(&self, indices: impl Iterator<Item = usize>, shape: &[T], expression: &[T], pose: &[T]) -> Result<Matrix<T>> {
        Self::check_params(shape, expression, pose)?;
        let jaw = rotation([pose[0], pose[1], pose[2]]);
        let global = rotation([pose[3], pose[4], pose[5]]);
        let rows: Vec<Vec<T>> = indices
            .map(|i| self.articulate(i, self.rest_vertex(i, shape, expression), &jaw, &global).to_vec())
            .collect();
        Ok(Matrix::from_rows(&rows))
    }

    /// All `V x 3` vertices. Pose dims 0..3 drive the jaw, 3..6 the head; the rest are inert.
    pub fn forward(&self, shape: &[T], expression: &[T], pose: &[T]) -> Result<Matrix<T>> {
        self.evaluate(0..self.vertex_count(), shape, expression, pose)
    }

    /// The `68 x 3` landmark vertices only.
    pub fn landmark_vertices(&self, shape: &[T], expression: &[T], pose: &[T]) -> Result<Matrix<T>> {
        self.evaluate(self.landmarks.iter().copied(), shape, expression, pose)
    }

    /// Weak-perspective projection of the landmark rows of `vertices`.
    pub fn project(&self, vertices: &Matrix<T>, cam: &CameraParams<T>) -> Result<Matrix<T>> {
        ensure_dim("vertex count", self.vertex_count(), vertices.rows())?;
        let picked: Vec<Vec<T>> = self.landmarks.iter().map(|&i| vertices.row(i).to_vec()).collect();
        project_points(&Matrix::from_rows(&picked), cam)
    }

    pub fn to_container(&self) -> Container {
        let f = |m: &Matrix<T>| m.as_slice().iter().map(|v| v.to_f32_lossy()).collect::<Vec<_>>();
        let v = self.vertex_count();
        let mut c = Container::new(KIND)
            .with_meta("vertices", v)
            .with_meta("landmarks", self.landmarks.len());
        c.push_array(NamedArray::new("template", v, 3, f(&self.template)));
        c.push_array(NamedArray::new("shape_basis", 3 * v, SHAPE_DIM, f(&self.shape_basis)));
        c.push_array(NamedArray::new("expression_basis", 3 * v, EXPRESSION_DIM, f(&self.expression_basis)));
        c.push_array(NamedArray::new("jaw_pivot", 1, 3, self.jaw_pivot.iter().map(|x| x.to_f32_lossy()).collect()));
        c.push_array(NamedArray::new("jaw_weights", v, 1, self.jaw_weights.iter().map(|x| x.to_f32_lossy()).collect()));
        c.push_array(NamedArray::new(
            "landmark_indices",
            self.landmarks.len(),
            1,
            self.landmarks.iter().map(|&i| i as f32).collect(),
        ));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind(KIND)?;
        let v: usize = c.meta("vertices")?;
        let n_lm: usize = c.meta("landmarks")?;
        let load = |name: &str, r: usize, k: usize| -> Result<Matrix<T>> {
            let a = c.expect_array(name, r, k)?;
            Ok(Matrix::from_vec(r, k, a.data.iter().map(|&x| T::from_f32_lossy(x)).collect()))
        };
        let pivot = load("jaw_pivot", 1, 3)?;
        let landmarks: Vec<usize> = c
            .expect_array("landmark_indices", n_lm, 1)?
            .data
            .iter()
            .map(|&x| x as usize)
            .collect();
        if let Some(&bad) = landmarks.iter().find(|&&i| i >= v) {
            return Err(Error::validation(format!("landmark index {bad} exceeds vertex count {v}")));
        }
        Ok(Self {
            template: load("template", v, 3)?,
            shape_basis: load("shape_basis", 3 * v, SHAPE_DIM)?,
            expression_basis: load("expression_basis", 3 * v, EXPRESSION_DIM)?,
            jaw_pivot: [pivot[(0, 0)], pivot[(0, 1)], pivot[(0, 2)]],
            jaw_weights: load("jaw_weights", v, 1)?.into_vec(),
            landmarks,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }
}

/// `p = scale * (x, y) + translation` for each row of an `N x 3` matrix.
pub fn project_points<T: Scalar>(points: &Matrix<T>, cam: &CameraParams<T>) -> Result<Matrix<T>> {
    if !(cam.scale > T::zero()) {
        return Err(Error::validation(format!("camera scale must be positive, got {}", cam.scale)));
    }
    ensure_dim("point width", 3, points.cols())?;
    Ok(Matrix::from_fn(points.rows(), 2, |r, a| {
        cam.scale * points[(r, a)] + cam.translation[a]
    }))
}
