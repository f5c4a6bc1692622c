use serde::{Deserialize, Serialize};

use super::{Gradients, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; non-positive disables clipping.
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 1.0,
        }
    }
}

/// Adam with bias correction and global-norm clipping.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Matrix<T>>,
    pub second_moment: Vec<Matrix<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        let zeros = || -> Vec<Matrix<T>> {
            params
                .iter()
                .map(|(_, _, v)| Matrix::zeros(v.rows(), v.cols()))
                .collect()
        };
        Self {
            config,
            step: 0,
            first_moment: zeros(),
            second_moment: zeros(),
        }
    }

    /// Applies one update; returns the pre-clip gradient norm.
    pub fn update(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>) -> T {
        let norm = grads.global_norm();
        let clip = if self.config.clip_norm > 0.0 && norm > T::of(self.config.clip_norm) {
            T::of(self.config.clip_norm) / norm
        } else {
            T::one()
        };
        self.step += 1;
        let b1 = T::of(self.config.beta1);
        let b2 = T::of(self.config.beta2);
        let bc1 = T::one() - b1.powi(self.step as i32);
        let bc2 = T::one() - b2.powi(self.step as i32);
        let lr = T::of(self.config.lr);
        let eps = T::of(self.config.eps);
        for id in params.ids().collect::<Vec<_>>() {
            let Some(g) = &grads.per_param[id.index()] else {
                continue;
            };
            let m = &mut self.first_moment[id.index()];
            let v = &mut self.second_moment[id.index()];
            let p = params.value_mut(id);
            for (((pp, mm), vv), &gg) in p
                .as_mut_slice()
                .iter_mut()
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
                .zip(g.as_slice())
            {
                let gg = gg * clip;
                *mm = b1 * *mm + (T::one() - b1) * gg;
                *vv = b2 * *vv + (T::one() - b2) * gg * gg;
                let mhat = *mm / bc1;
                let vhat = *vv / bc2;
                *pp -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        norm
    }
}
