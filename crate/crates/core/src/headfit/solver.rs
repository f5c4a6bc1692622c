//! Damped Gauss-Newton and backtracking gradient descent over a sum of
//! squared residuals. Both only ever accept steps that lower the cost, so the
//! recorded trace is non-increasing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LevenbergMarquardt,
    GradientDescent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub max_iters: usize,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub rel_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::LevenbergMarquardt,
            max_iters: 2000,
            rel_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Cost after initialization and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FitReport {
    pub fn initial_loss(&self) -> f64 {
        self.trace[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.trace.last().expect("trace holds the initial cost")
    }
}

/// Normal equations `(J^T J) d = -J^T r` at a fixed point.
pub(crate) trait Linearization {
    /// `J^T r`, half the cost gradient.
    fn half_gradient(&self) -> &[f64];

    /// Solves `(H + mu * diag(H)) d = -J^T r`.
    fn solve(&self, mu: f64) -> Option<Vec<f64>>;
}

pub(crate) trait LeastSquares {
    fn cost(&self, x: &[f64]) -> f64;

    fn linearize(&self, x: &[f64]) -> Box<dyn Linearization + '_>;
}

fn damped_diagonal(diag: f64, floor: f64) -> f64 {
    diag.max(floor)
}

pub(crate) struct DenseSystem {
    pub hessian: DMatrix<f64>,
    pub gradient: Vec<f64>,
}

impl Linearization for DenseSystem {
    fn half_gradient(&self) -> &[f64] {
        &self.gradient
    }

    fn solve(&self, mu: f64) -> Option<Vec<f64>> {
        let n = self.gradient.len();
        let floor = 1e-12 * (0..n).map(|i| self.hessian[(i, i)]).fold(1e-300, f64::max);
        let mut a = self.hessian.clone();
        for i in 0..n {
            a[(i, i)] += mu * damped_diagonal(self.hessian[(i, i)], floor);
        }
        let rhs = DVector::from_iterator(n, self.gradient.iter().map(|g| -g));
        a.cholesky().map(|c| c.solve(&rhs).iter().copied().collect())
    }
}

/// Symmetric block-tridiagonal system whose off-diagonal blocks are `coupling * I`.
pub(crate) struct BlockTridiagonal {
    pub blocks: Vec<DMatrix<f64>>,
    pub coupling: f64,
    pub gradient: Vec<f64>,
}

impl Linearization for BlockTridiagonal {
    fn half_gradient(&self) -> &[f64] {
        &self.gradient
    }

    fn solve(&self, mu: f64) -> Option<Vec<f64>> {
        let t_len = self.blocks.len();
        let n = self.blocks[0].nrows();
        let floor = 1e-12
            * self
                .blocks
                .iter()
                .flat_map(|b| (0..n).map(move |i| b[(i, i)]))
                .fold(1e-300, f64::max);
        let c = self.coupling;
        // Block Thomas elimination: D'_t = D_t - c^2 D'_{t-1}^{-1}.
        let mut factors = Vec::with_capacity(t_len);
        let mut ys: Vec<DVector<f64>> = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let mut d = self.blocks[t].clone();
            for i in 0..n {
                d[(i, i)] += mu * damped_diagonal(self.blocks[t][(i, i)], floor);
            }
            let mut y = DVector::from_iterator(n, self.gradient[t * n..(t + 1) * n].iter().map(|g| -g));
            if t > 0 {
                let prev: &nalgebra::Cholesky<f64, nalgebra::Dyn> = &factors[t - 1];
                d -= prev.inverse() * (c * c);
                y -= prev.solve(&ys[t - 1]) * c;
            }
            factors.push(d.cholesky()?);
            ys.push(y);
        }
        let mut x = vec![DVector::<f64>::zeros(n); t_len];
        for t in (0..t_len).rev() {
            let mut rhs = ys[t].clone();
            if t + 1 < t_len {
                rhs -= &x[t + 1] * c;
            }
            x[t] = factors[t].solve(&rhs);
        }
        Some(x.into_iter().flat_map(|v| v.iter().copied().collect::<Vec<_>>()).collect())
    }
}

fn add_scaled(x: &[f64], d: &[f64], s: f64) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + s * b).collect()
}

pub(crate) fn minimize<P: LeastSquares>(problem: &P, x0: Vec<f64>, config: &SolverConfig) -> Result<(Vec<f64>, FitReport)> {
    let c0 = problem.cost(&x0);
    if !c0.is_finite() {
        return Err(Error::Divergence {
            reason: "initial loss is not finite".into(),
            trace: vec![c0],
        });
    }
    match config.method {
        Method::LevenbergMarquardt => levenberg_marquardt(problem, x0, c0, config),
        Method::GradientDescent => gradient_descent(problem, x0, c0, config),
    }
}

fn levenberg_marquardt<P: LeastSquares>(
    problem: &P,
    mut x: Vec<f64>,
    mut cost: f64,
    config: &SolverConfig,
) -> Result<(Vec<f64>, FitReport)> {
    let mut trace = vec![cost];
    let mut mu = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters && !converged {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let lin = problem.linearize(&x);
        let mut accepted = None;
        while mu <= 1e16 {
            if let Some(step) = lin.solve(mu) {
                let cand = add_scaled(&x, &step, 1.0);
                let c = problem.cost(&cand);
                if c.is_finite() && c < cost {
                    accepted = Some((cand, c));
                    mu = (mu / 3.0).max(1e-12);
                    break;
                }
            }
            mu *= 4.0;
        }
        match accepted {
            Some((cand, c)) => {
                let rel = (cost - c) / cost;
                x = cand;
                cost = c;
                trace.push(c);
                converged = rel < config.rel_tol;
            }
            // No damping level lowers the cost: a stationary point to working precision.
            None => converged = true,
        }
    }
    Ok((x, FitReport { trace, iterations, converged }))
}

fn gradient_descent<P: LeastSquares>(
    problem: &P,
    mut x: Vec<f64>,
    mut cost: f64,
    config: &SolverConfig,
) -> Result<(Vec<f64>, FitReport)> {
    let mut trace = vec![cost];
    let mut alpha = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters && !converged {
        iterations += 1;
        let lin = problem.linearize(&x);
        let grad: Vec<f64> = lin.half_gradient().iter().map(|g| 2.0 * g).collect();
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        if g2 == 0.0 || cost == 0.0 {
            converged = true;
            break;
        }
        loop {
            let cand = add_scaled(&x, &grad, -alpha);
            let c = problem.cost(&cand);
            if c.is_finite() && c <= cost - 1e-4 * alpha * g2 && c < cost {
                let rel = (cost - c) / cost;
                x = cand;
                cost = c;
                trace.push(c);
                alpha *= 2.0;
                converged = rel < config.rel_tol;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-30 {
                if g2.sqrt() <= 1e-8 * (1.0 + cost) {
                    converged = true;
                    break;
                }
                return Err(Error::Divergence {
                    reason: format!("no descent at minimum step, gradient norm {:.3e}", g2.sqrt()),
                    trace,
                });
            }
        }
    }
    Ok((x, FitReport { trace, iterations, converged }))
}
