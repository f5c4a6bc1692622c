use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::model::{ToyHeadModel, MODEL_LANDMARKS};
use super::solver::{minimize, DenseSystem, FitReport, LeastSquares, Linearization, SolverConfig};
use crate::error::{ensure_dim, Error, Result};
use crate::motion::{ShapeParams, EXPRESSION_DIM, SHAPE_DIM};
use crate::tensor::Matrix;

/// A 3D scan: points in meters plus optional landmark annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct Scan {
    pub points: Matrix<f64>,
    pub landmarks: Option<Matrix<f64>>,
}

impl Scan {
    pub fn new(points: Matrix<f64>, landmarks: Option<Matrix<f64>>) -> Result<Self> {
        if points.rows() == 0 {
            return Err(Error::validation("scan has no points"));
        }
        ensure_dim("scan point width", 3, points.cols())?;
        if let Some(l) = &landmarks {
            ensure_dim("scan landmark count", MODEL_LANDMARKS, l.rows())?;
            ensure_dim("scan landmark width", 3, l.cols())?;
        }
        Ok(Self { points, landmarks })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeFitConfig {
    pub landmark_weight: f64,
    pub scan_weight: f64,
    pub solver: SolverConfig,
}

impl Default for ShapeFitConfig {
    fn default() -> Self {
        Self {
            landmark_weight: 1.0,
            scan_weight: 0.1,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ShapeFit {
    pub shape: ShapeParams<f64>,
    pub report: FitReport,
}

struct ShapeProblem<'a> {
    model: &'a ToyHeadModel<f64>,
    points: &'a Matrix<f64>,
    landmarks: &'a Matrix<f64>,
    w_lm: f64,
    w_scan: f64,
}

impl ShapeProblem<'_> {
    fn vertices(&self, beta: &[f64]) -> Matrix<f64> {
        let zeros = [0.0; EXPRESSION_DIM];
        Matrix::from_rows(
            &(0..self.model.vertex_count())
                .map(|i| self.model.rest_vertex(i, beta, &zeros).to_vec())
                .collect::<Vec<_>>(),
        )
    }

    fn nearest(verts: &Matrix<f64>, p: &[f64]) -> (usize, f64) {
        (0..verts.rows())
            .map(|i| {
                let v = verts.row(i);
                let d = (v[0] - p[0]).powi(2) + (v[1] - p[1]).powi(2) + (v[2] - p[2]).powi(2);
                (i, d)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("model has vertices")
    }

    /// `(vertex, target, weight)` for every residual block at `beta`.
    fn correspondences(&self, beta: &[f64]) -> (Matrix<f64>, Vec<(usize, [f64; 3], f64)>) {
        let verts = self.vertices(beta);
        let mut out = Vec::with_capacity(MODEL_LANDMARKS + self.points.rows());
        for (k, &i) in self.model.landmark_indices().iter().enumerate() {
            let l = self.landmarks.row(k);
            out.push((i, [l[0], l[1], l[2]], self.w_lm));
        }
        for p in self.points.row_iter() {
            let (i, _) = Self::nearest(&verts, p);
            out.push((i, [p[0], p[1], p[2]], self.w_scan));
        }
        (verts, out)
    }
}

impl LeastSquares for ShapeProblem<'_> {
    fn cost(&self, beta: &[f64]) -> f64 {
        let (verts, corr) = self.correspondences(beta);
        corr.iter()
            .map(|(i, t, w)| {
                let v = verts.row(*i);
                w * ((v[0] - t[0]).powi(2) + (v[1] - t[1]).powi(2) + (v[2] - t[2]).powi(2))
            })
            .sum()
    }

    fn linearize(&self, beta: &[f64]) -> Box<dyn Linearization + '_> {
        let (verts, corr) = self.correspondences(beta);
        let basis = self.model.shape_basis();
        let mut h = DMatrix::<f64>::zeros(SHAPE_DIM, SHAPE_DIM);
        let mut g = DVector::<f64>::zeros(SHAPE_DIM);
        // Per vertex the Jacobian is three basis rows, identical for every residual using it.
        let mut weight = vec![0.0; verts.rows()];
        let mut resid = vec![[0.0; 3]; verts.rows()];
        for (i, t, w) in &corr {
            weight[*i] += w;
            let v = verts.row(*i);
            for a in 0..3 {
                resid[*i][a] += w * (v[a] - t[a]);
            }
        }
        for i in (0..verts.rows()).filter(|&i| weight[i] > 0.0) {
            let rows = DMatrix::from_row_slice(3, SHAPE_DIM, &basis.as_slice()[3 * i * SHAPE_DIM..3 * (i + 1) * SHAPE_DIM]);
            h += rows.transpose() * &rows * weight[i];
            g += rows.transpose() * DVector::from_row_slice(&resid[i]);
        }
        Box::new(DenseSystem {
            hessian: h,
            gradient: g.iter().copied().collect(),
        })
    }
}

fn problem<'a>(model: &'a ToyHeadModel<f64>, scan: &'a Scan, config: &ShapeFitConfig) -> Result<ShapeProblem<'a>> {
    let landmarks = scan
        .landmarks
        .as_ref()
        .ok_or_else(|| Error::validation("shape fitting needs scan landmarks"))?;
    if !(config.landmark_weight >= 0.0 && config.scan_weight >= 0.0) {
        return Err(Error::validation("shape fit weights must be non-negative"));
    }
    Ok(ShapeProblem {
        model,
        points: &scan.points,
        landmarks,
        w_lm: config.landmark_weight,
        w_scan: config.scan_weight,
    })
}

/// `w1 * sum |landmark residual|^2 + w2 * sum_p min_v |p - v|^2`.
pub fn shape_objective(model: &ToyHeadModel<f64>, scan: &Scan, beta: &[f64], config: &ShapeFitConfig) -> Result<f64> {
    ensure_dim("shape parameters", SHAPE_DIM, beta.len())?;
    Ok(problem(model, scan, config)?.cost(beta))
}

/// Analytic gradient of [`shape_objective`] with nearest vertices held fixed.
pub fn shape_gradient(model: &ToyHeadModel<f64>, scan: &Scan, beta: &[f64], config: &ShapeFitConfig) -> Result<Vec<f64>> {
    ensure_dim("shape parameters", SHAPE_DIM, beta.len())?;
    let p = problem(model, scan, config)?;
    let lin = p.linearize(beta);
    Ok(lin.half_gradient().iter().map(|g| 2.0 * g).collect())
}

/// Refines identity coefficients against a scan, starting from `init`
/// (typically the average of per-frame estimates).
pub fn fit_shape(model: &ToyHeadModel<f64>, scan: &Scan, init: &ShapeParams<f64>, config: &ShapeFitConfig) -> Result<ShapeFit> {
    let p = problem(model, scan, config)?;
    let (beta, report) = minimize(&p, init.as_slice().to_vec(), &config.solver)?;
    Ok(ShapeFit {
        shape: ShapeParams::new(beta)?,
        report,
    })
}
