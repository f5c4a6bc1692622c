use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{ToyHeadModel, MODEL_LANDMARKS};
use super::rotation::{mat_mul, mat_vec, rotate_derivative, rotation};
use super::solver::{minimize, BlockTridiagonal, FitReport, LeastSquares, Linearization, SolverConfig};
use crate::error::{ensure_dim, Error, Result};
use crate::metrics::LandmarkTrack;
use crate::motion::{CameraParams, MotionFrame, MotionSequence, ShapeParams, EXPRESSION_DIM, POSE_DIM};

/// Fitted values per frame: expression, jaw rotation, head rotation, camera scale, camera translation.
pub const FRAME_PARAMS: usize = EXPRESSION_DIM + 6 + 3;
const JAW: usize = EXPRESSION_DIM;
const HEAD: usize = EXPRESSION_DIM + 3;
const CAM: usize = EXPRESSION_DIM + 6;

/// Per-frame parameters in the motion layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameParams {
    pub expression: Vec<f64>,
    pub pose: Vec<f64>,
    pub camera: CameraParams<f64>,
}

impl FrameParams {
    /// `[expression, pose[0..6], scale, tx, ty]`.
    pub fn pack(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(FRAME_PARAMS);
        x.extend_from_slice(&self.expression);
        x.extend_from_slice(&self.pose[..6]);
        x.push(self.camera.scale);
        x.extend_from_slice(&self.camera.translation);
        x
    }

    /// Inverse of [`pack`](Self::pack); inert pose dims come from `template`.
    pub fn unpack(x: &[f64], template: &FrameParams) -> Self {
        let mut pose = template.pose.clone();
        pose[..6].copy_from_slice(&x[JAW..CAM]);
        Self {
            expression: x[..EXPRESSION_DIM].to_vec(),
            pose,
            camera: CameraParams {
                scale: x[CAM],
                translation: [x[CAM + 1], x[CAM + 2]],
            },
        }
    }

    fn validate(&self) -> Result<()> {
        ensure_dim("expression parameters", EXPRESSION_DIM, self.expression.len())?;
        ensure_dim("pose parameters", POSE_DIM, self.pose.len())?;
        CameraParams::new(self.camera.scale, self.camera.translation).map(|_| ())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceFitConfig {
    pub lambda_smooth: f64,
    pub solver: SolverConfig,
}

impl Default for SequenceFitConfig {
    fn default() -> Self {
        Self {
            lambda_smooth: 0.1,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SequenceFit {
    pub frames: Vec<FrameParams>,
    pub report: FitReport,
    /// Root mean squared landmark distance in pixels.
    pub rmse_px: f64,
}

impl SequenceFit {
    pub fn motion(&self, fps: f64) -> Result<MotionSequence<f64>> {
        let frames: Vec<MotionFrame<f64>> = self
            .frames
            .iter()
            .map(|f| MotionFrame::new(f.expression.clone(), f.pose.clone()))
            .collect::<Result<_>>()?;
        MotionSequence::from_frames(&frames, fps)
    }

    pub fn cameras(&self) -> Vec<CameraParams<f64>> {
        self.frames.iter().map(|f| f.camera).collect()
    }

    /// `sum_t |x_{t+1} - x_t|` over the packed parameters.
    pub fn temporal_variation(&self) -> f64 {
        temporal_variation(&self.frames)
    }
}

pub fn temporal_variation(frames: &[FrameParams]) -> f64 {
    frames
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].pack(), w[1].pack());
            a.iter().zip(&b).map(|(p, q)| (q - p).powi(2)).sum::<f64>().sqrt()
        })
        .sum()
}

struct SequenceProblem<'a> {
    model: &'a ToyHeadModel<f64>,
    /// Rest-pose landmark vertices with the shape applied.
    base: Vec<[f64; 3]>,
    observed: &'a LandmarkTrack<f64>,
    lambda: f64,
}

struct FrameLinearization {
    residual: DVector<f64>,
    jacobian: DMatrix<f64>,
}

impl<'a> SequenceProblem<'a> {
    fn new(model: &'a ToyHeadModel<f64>, beta: &ShapeParams<f64>, observed: &'a LandmarkTrack<f64>, lambda: f64) -> Result<Self> {
        if observed.is_empty() {
            return Err(Error::validation("landmark track has no frames"));
        }
        ensure_dim("observed landmark count", MODEL_LANDMARKS, observed.frames[0].len())?;
        if !(lambda >= 0.0) {
            return Err(Error::validation("smoothing weight must be non-negative"));
        }
        let zeros = [0.0; EXPRESSION_DIM];
        let base = model
            .landmark_indices()
            .iter()
            .map(|&i| model.rest_vertex(i, beta.as_slice(), &zeros))
            .collect();
        Ok(Self {
            model,
            base,
            observed,
            lambda,
        })
    }

    fn frames(&self) -> usize {
        self.observed.len()
    }

    /// Landmark positions before projection.
    fn posed(&self, x: &[f64]) -> Vec<[f64; 3]> {
        let jaw = rotation([x[JAW], x[JAW + 1], x[JAW + 2]]);
        let head = rotation([x[HEAD], x[HEAD + 1], x[HEAD + 2]]);
        let basis = self.model.expression_basis();
        self.model
            .landmark_indices()
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let rest = [0, 1, 2].map(|a| {
                    let e: f64 = basis.row(3 * i + a).iter().zip(&x[..EXPRESSION_DIM]).map(|(b, p)| b * p).sum();
                    self.base[k][a] + e
                });
                self.model.articulate(i, rest, &jaw, &head)
            })
            .collect()
    }

    fn frame_residual(&self, t: usize, x: &[f64]) -> Vec<f64> {
        let pts = self.posed(x);
        let obs = &self.observed.frames[t];
        pts.iter()
            .zip(obs)
            .flat_map(|(v, o)| [0, 1].map(|a| x[CAM] * v[a] + x[CAM + 1 + a] - o[a]))
            .collect()
    }

    fn frame_linearization(&self, t: usize, x: &[f64]) -> FrameLinearization {
        let jaw_w = [x[JAW], x[JAW + 1], x[JAW + 2]];
        let head_w = [x[HEAD], x[HEAD + 1], x[HEAD + 2]];
        let jaw = rotation(jaw_w);
        let head = rotation(head_w);
        let pivot = self.model.jaw_pivot();
        let basis = self.model.expression_basis();
        let scale = x[CAM];
        let obs = &self.observed.frames[t];
        let mut residual = DVector::zeros(2 * MODEL_LANDMARKS);
        let mut jac = DMatrix::zeros(2 * MODEL_LANDMARKS, FRAME_PARAMS);
        for (k, &i) in self.model.landmark_indices().iter().enumerate() {
            let rest = [0, 1, 2].map(|a| {
                let e: f64 = basis.row(3 * i + a).iter().zip(&x[..EXPRESSION_DIM]).map(|(b, p)| b * p).sum();
                self.base[k][a] + e
            });
            let w = self.model.jaw_weights()[i];
            let local = [0, 1, 2].map(|a| rest[a] - pivot[a]);
            let rotated = mat_vec(&jaw, local);
            let v1 = [0, 1, 2].map(|a| w * (rotated[a] + pivot[a]) + (1.0 - w) * rest[a]);
            let v = mat_vec(&head, v1);

            // d v / d rest = head * (w * jaw + (1 - w) I)
            let mut blend = jaw;
            for (a, row) in blend.iter_mut().enumerate() {
                for (b, e) in row.iter_mut().enumerate() {
                    *e = w * *e + if a == b { 1.0 - w } else { 0.0 };
                }
            }
            let d_rest = mat_mul(&head, &blend);
            let d_jaw = mat_mul(&head, &rotate_derivative(jaw_w, &jaw, local));
            let d_head = rotate_derivative(head_w, &head, v1);

            for a in 0..2 {
                let row = 2 * k + a;
                residual[row] = scale * v[a] + x[CAM + 1 + a] - obs[k][a];
                for p in 0..EXPRESSION_DIM {
                    let dv: f64 = (0..3).map(|b| d_rest[a][b] * basis[(3 * i + b, p)]).sum();
                    jac[(row, p)] = scale * dv;
                }
                for j in 0..3 {
                    jac[(row, JAW + j)] = scale * w * d_jaw[a][j];
                    jac[(row, HEAD + j)] = scale * d_head[a][j];
                }
                jac[(row, CAM)] = v[a];
                jac[(row, CAM + 1 + a)] = 1.0;
            }
        }
        FrameLinearization { residual, jacobian: jac }
    }

    fn smoothing_cost(&self, x: &[f64]) -> f64 {
        let n = FRAME_PARAMS;
        (1..self.frames())
            .map(|t| {
                (0..n)
                    .map(|p| (x[t * n + p] - x[(t - 1) * n + p]).powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>()
            * self.lambda
    }
}

impl LeastSquares for SequenceProblem<'_> {
    fn cost(&self, x: &[f64]) -> f64 {
        let n = FRAME_PARAMS;
        let data: f64 = (0..self.frames())
            .into_par_iter()
            .map(|t| self.frame_residual(t, &x[t * n..(t + 1) * n]).iter().map(|r| r * r).sum::<f64>())
            .sum();
        data + self.smoothing_cost(x)
    }

    fn linearize(&self, x: &[f64]) -> Box<dyn Linearization + '_> {
        let n = FRAME_PARAMS;
        let t_len = self.frames();
        let per_frame: Vec<(DMatrix<f64>, DVector<f64>)> = (0..t_len)
            .into_par_iter()
            .map(|t| {
                let lin = self.frame_linearization(t, &x[t * n..(t + 1) * n]);
                let jt = lin.jacobian.transpose();
                (&jt * &lin.jacobian, jt * lin.residual)
            })
            .collect();
        let mut blocks = Vec::with_capacity(t_len);
        let mut gradient = Vec::with_capacity(t_len * n);
        for (t, (mut h, mut g)) in per_frame.into_iter().enumerate() {
            let neighbours = usize::from(t > 0) + usize::from(t + 1 < t_len);
            for p in 0..n {
                h[(p, p)] += self.lambda * neighbours as f64;
                let xp = x[t * n + p];
                if t > 0 {
                    g[p] += self.lambda * (xp - x[(t - 1) * n + p]);
                }
                if t + 1 < t_len {
                    g[p] += self.lambda * (xp - x[(t + 1) * n + p]);
                }
            }
            blocks.push(h);
            gradient.extend(g.iter());
        }
        Box::new(BlockTridiagonal {
            blocks,
            coupling: -self.lambda,
            gradient,
        })
    }
}

/// Least-squares scale and translation aligning model landmark `xy` to observations.
pub fn similarity_init(model_xy: &[[f64; 3]], observed: &[[f64; 2]]) -> Result<CameraParams<f64>> {
    let n = model_xy.len() as f64;
    let mean_m = [0, 1].map(|a| model_xy.iter().map(|p| p[a]).sum::<f64>() / n);
    let mean_o = [0, 1].map(|a| observed.iter().map(|p| p[a]).sum::<f64>() / n);
    let (mut num, mut den) = (0.0, 0.0);
    for (m, o) in model_xy.iter().zip(observed) {
        for a in 0..2 {
            num += (m[a] - mean_m[a]) * (o[a] - mean_o[a]);
            den += (m[a] - mean_m[a]).powi(2);
        }
    }
    let scale = num / den;
    CameraParams::new(scale, [mean_o[0] - scale * mean_m[0], mean_o[1] - scale * mean_m[1]])
}

/// Concatenated [`FrameParams::pack`] of every frame.
pub fn pack_frames(frames: &[FrameParams]) -> Vec<f64> {
    frames.iter().flat_map(FrameParams::pack).collect()
}

fn initial_frames(problem: &SequenceProblem, init: Option<&[FrameParams]>) -> Result<Vec<FrameParams>> {
    match init {
        Some(frames) => {
            ensure_dim("initial frame count", problem.frames(), frames.len())?;
            frames.iter().try_for_each(FrameParams::validate)?;
            Ok(frames.to_vec())
        }
        None => problem
            .observed
            .frames
            .iter()
            .map(|obs| {
                Ok(FrameParams {
                    expression: vec![0.0; EXPRESSION_DIM],
                    pose: vec![0.0; POSE_DIM],
                    camera: similarity_init(&problem.base, obs)?,
                })
            })
            .collect(),
    }
}

/// Objective at packed parameters (`FRAME_PARAMS` values per frame).
pub fn sequence_objective(
    model: &ToyHeadModel<f64>,
    beta: &ShapeParams<f64>,
    observed: &LandmarkTrack<f64>,
    x: &[f64],
    lambda_smooth: f64,
) -> Result<f64> {
    let p = SequenceProblem::new(model, beta, observed, lambda_smooth)?;
    ensure_dim("packed sequence parameters", p.frames() * FRAME_PARAMS, x.len())?;
    Ok(p.cost(x))
}

/// Analytic gradient of [`sequence_objective`].
pub fn sequence_gradient(
    model: &ToyHeadModel<f64>,
    beta: &ShapeParams<f64>,
    observed: &LandmarkTrack<f64>,
    x: &[f64],
    lambda_smooth: f64,
) -> Result<Vec<f64>> {
    let p = SequenceProblem::new(model, beta, observed, lambda_smooth)?;
    ensure_dim("packed sequence parameters", p.frames() * FRAME_PARAMS, x.len())?;
    let lin = p.linearize(x);
    let grad = lin.half_gradient().iter().map(|g| 2.0 * g).collect();
    Ok(grad)
}

/// Fits expression, jaw and head rotation, and camera for every frame of
/// `observed`, with the identity `beta` held fixed.
pub fn fit_sequence(
    model: &ToyHeadModel<f64>,
    beta: &ShapeParams<f64>,
    observed: &LandmarkTrack<f64>,
    init: Option<&[FrameParams]>,
    config: &SequenceFitConfig,
) -> Result<SequenceFit> {
    let problem = SequenceProblem::new(model, beta, observed, config.lambda_smooth)?;
    let start = initial_frames(&problem, init)?;
    let (x, report) = minimize(&problem, pack_frames(&start), &config.solver)?;
    let frames: Vec<FrameParams> = x
        .chunks(FRAME_PARAMS)
        .zip(&start)
        .map(|(chunk, tmpl)| FrameParams::unpack(chunk, tmpl))
        .collect();
    if let Some(bad) = frames.iter().find(|f| !(f.camera.scale > 0.0)) {
        return Err(Error::Divergence {
            reason: format!("camera scale left the positive range ({})", bad.camera.scale),
            trace: report.trace,
        });
    }
    let sq: f64 = (0..problem.frames())
        .map(|t| problem.frame_residual(t, &x[t * FRAME_PARAMS..(t + 1) * FRAME_PARAMS]).iter().map(|r| r * r).sum::<f64>())
        .sum();
    let rmse_px = (sq / (problem.frames() * MODEL_LANDMARKS) as f64).sqrt();
    Ok(SequenceFit {
        frames,
        report,
        rmse_px,
    })
}

/// Projected landmarks for given per-frame parameters, as a track.
pub fn render_landmarks(model: &ToyHeadModel<f64>, beta: &ShapeParams<f64>, frames: &[FrameParams]) -> Result<LandmarkTrack<f64>> {
    let rows = frames
        .iter()
        .map(|f| {
            f.validate()?;
            let v = model.landmark_vertices(beta.as_slice(), &f.expression, &f.pose)?;
            let p = super::model::project_points(&v, &f.camera)?;
            Ok((0..p.rows()).map(|r| [p[(r, 0)], p[(r, 1)]]).collect())
        })
        .collect::<Result<Vec<Vec<[f64; 2]>>>>()?;
    LandmarkTrack::new(rows)
}
