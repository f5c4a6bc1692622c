//! Objective, optimizer loop and resumable checkpoints for the CVAE.
//!
//! Every random draw is derived from `(seed, counter)`: batch order from the
//! epoch index and reparameterization noise from the global step. A resumed
//! run therefore replays exactly what an uninterrupted run would have done.

pub mod losses;

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use losses::{
    loss_kl, loss_reconstruction, loss_total, loss_velocity, LossBreakdown, LossWeights,
};

use crate::autograd::{Adam, AdamConfig, Graph, Gradients};
use crate::container::{Container, NamedArray};
use crate::cvae::{Cvae, LatentVector};
use crate::error::{ensure_dim, Error, Result};
use crate::motion::{MotionSequence, ShapeParams};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

const NOISE_DOMAIN: u64 = 0x6e6f_6973_6500_0001;
const SHUFFLE_DOMAIN: u64 = 0x7368_7566_0000_0002;

/// One `(audio, shape, motion)` triple with audio already on the motion grid.
#[derive(Clone, Debug)]
pub struct TrainingExample<T> {
    pub audio: Matrix<T>,
    pub shape: ShapeParams<T>,
    pub motion: MotionSequence<T>,
}

impl<T: Scalar> TrainingExample<T> {
    pub fn new(audio: Matrix<T>, shape: ShapeParams<T>, motion: MotionSequence<T>) -> Result<Self> {
        ensure_dim("training audio rows", motion.len(), audio.rows())?;
        Ok(Self {
            audio,
            shape,
            motion,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Write a checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    pub clip_norm: f64,
    pub lambda_r: f64,
    pub lambda_v: f64,
    pub lambda_k: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        Self {
            epochs: 10,
            batch_size: 8,
            lr: 1e-4,
            seed: 0,
            checkpoint_every: 0,
            checkpoint_dir: None,
            clip_norm: 1.0,
            lambda_r: w.reconstruction,
            lambda_v: w.velocity,
            lambda_k: w.kl,
        }
    }
}

impl TrainConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            reconstruction: self.lambda_r,
            velocity: self.lambda_v,
            kl: self.lambda_k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::validation("epochs and batch_size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::validation("learning rate must be positive"));
        }
        if self.checkpoint_every > 0 && self.checkpoint_dir.is_none() {
            return Err(Error::validation("checkpoint_every requires checkpoint_dir"));
        }
        self.weights().validate()
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            clip_norm: self.clip_norm,
            ..AdamConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub losses: LossBreakdown,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossHistory {
    /// Batch-mean losses of each optimizer step, computed before the update.
    pub steps: Vec<LossBreakdown>,
    pub epochs: Vec<EpochRecord>,
}

impl LossHistory {
    /// `epoch,L_re,L_vel,L_kl,total`
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,L_re,L_vel,L_kl,total")?;
        for r in &self.epochs {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch, r.losses.reconstruction, r.losses.velocity, r.losses.kl, r.losses.total
            )?;
        }
        Ok(())
    }
}

/// Model plus optimizer state and progress counters.
pub struct Trainer<T> {
    model: Cvae<T>,
    optimizer: Adam<T>,
    config: TrainConfig,
    epoch: usize,
    history: LossHistory,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: Cvae<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = Adam::new(config.adam(), model.params());
        Ok(Self {
            model,
            optimizer,
            config,
            epoch: 0,
            history: LossHistory::default(),
        })
    }

    pub fn model(&self) -> &Cvae<T> {
        &self.model
    }

    pub fn into_parts(self) -> (Cvae<T>, LossHistory) {
        (self.model, self.history)
    }

    pub fn history(&self) -> &LossHistory {
        &self.history
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn steps_done(&self) -> u64 {
        self.optimizer.step
    }

    fn noise_for_step(&self, step: u64, count: usize) -> Vec<Vec<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ NOISE_DOMAIN);
        rng.set_stream(step);
        let d = self.model.latent_dim();
        (0..count)
            .map(|_| {
                (0..d)
                    .map(|_| {
                        let x: f64 = StandardNormal.sample(&mut rng);
                        T::of(x)
                    })
                    .collect()
            })
            .collect()
    }

    /// Loss and gradients for one example with the given noise.
    fn example_gradients(
        &self,
        ex: &TrainingExample<T>,
        noise: &[T],
    ) -> Result<(LossBreakdown, Gradients<T>)> {
        let w = self.config.weights();
        let model = &self.model;
        let mut g = Graph::new(model.params());
        let enc = model.encode_graph(&mut g, ex.motion.as_matrix(), &ex.shape, &ex.audio)?;
        let scaled = g.mul_const(enc.sigma, Matrix::row_vector(noise));
        let z = g.add(enc.mu, scaled);
        let pred = model.decode_graph(&mut g, z, &ex.shape, &ex.audio, ex.motion.len())?;
        let gt = ex.motion.as_matrix().clone();

        let rc = g.mse_loss(pred, gt.clone());
        let kl = g.kl_loss(enc.mu, enc.sigma);
        let mut total = g.scale(rc, T::of(w.reconstruction));
        let vel = if w.velocity > 0.0 {
            let v = g.velocity_loss(pred, gt);
            let sv = g.scale(v, T::of(w.velocity));
            total = g.add(total, sv);
            g.scalar(v).to_f64_lossy()
        } else {
            0.0
        };
        let sk = g.scale(kl, T::of(w.kl));
        total = g.add(total, sk);

        let breakdown = LossBreakdown {
            reconstruction: g.scalar(rc).to_f64_lossy(),
            velocity: vel,
            kl: g.scalar(kl).to_f64_lossy(),
            total: g.scalar(total).to_f64_lossy(),
        };
        Ok((breakdown, g.backward(total)))
    }

    /// One optimizer update over `batch`; returns the pre-update batch loss.
    pub fn step(&mut self, batch: &[&TrainingExample<T>]) -> Result<LossBreakdown> {
        if batch.is_empty() {
            return Err(Error::validation("empty batch"));
        }
        let step = self.optimizer.step;
        let noise = self.noise_for_step(step, batch.len());
        let mut grads = Gradients::zeros_like(self.model.params());
        let mut mean = LossBreakdown::default();
        let inv = 1.0 / batch.len() as f64;
        for (ex, eps) in batch.iter().zip(&noise) {
            let (l, g) = self.example_gradients(ex, eps)?;
            if !l.total.is_finite() {
                return Err(Error::NonFinite {
                    step: step as usize,
                    detail: format!("{l:?}"),
                });
            }
            grads.accumulate(&g, T::of(inv));
            mean.reconstruction += l.reconstruction * inv;
            mean.velocity += l.velocity * inv;
            mean.kl += l.kl * inv;
            mean.total += l.total * inv;
        }
        let norm = self.optimizer.update(self.model.params_mut(), &grads);
        if !norm.is_finite() {
            return Err(Error::NonFinite {
                step: step as usize,
                detail: "gradient norm is not finite".into(),
            });
        }
        self.history.steps.push(mean);
        Ok(mean)
    }

    fn check_data(&self, data: &[TrainingExample<T>]) -> Result<()> {
        if data.is_empty() {
            return Err(Error::validation("training set is empty"));
        }
        if self.config.lambda_v > 0.0 {
            if let Some(ex) = data.iter().find(|e| e.motion.len() < 2) {
                return Err(Error::validation(format!(
                    "velocity loss needs two frames; found a {}-frame example",
                    ex.motion.len()
                )));
            }
        }
        Ok(())
    }

    fn epoch_order(&self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ SHUFFLE_DOMAIN);
        rng.set_stream(self.epoch as u64);
        order.shuffle(&mut rng);
        order
    }

    pub fn run_epoch(&mut self, data: &[TrainingExample<T>]) -> Result<EpochRecord> {
        self.check_data(data)?;
        let order = self.epoch_order(data.len());
        let mut sum = LossBreakdown::default();
        let mut batches = 0usize;
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<&TrainingExample<T>> = chunk.iter().map(|&i| &data[i]).collect();
            let l = self.step(&batch)?;
            sum.reconstruction += l.reconstruction;
            sum.velocity += l.velocity;
            sum.kl += l.kl;
            sum.total += l.total;
            batches += 1;
        }
        let n = batches as f64;
        self.epoch += 1;
        let record = EpochRecord {
            epoch: self.epoch,
            losses: LossBreakdown {
                reconstruction: sum.reconstruction / n,
                velocity: sum.velocity / n,
                kl: sum.kl / n,
                total: sum.total / n,
            },
        };
        self.history.epochs.push(record.clone());
        Ok(record)
    }

    /// Runs until `config.epochs` epochs are complete, writing checkpoints at
    /// the configured cadence.
    pub fn run(&mut self, data: &[TrainingExample<T>]) -> Result<()> {
        while self.epoch < self.config.epochs {
            self.run_epoch(data)?;
            if let (true, Some(dir)) = (
                self.config.checkpoint_every > 0 && self.epoch % self.config.checkpoint_every == 0,
                self.config.checkpoint_dir.clone(),
            ) {
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                self.save_checkpoint(dir.join(format!("epoch_{:05}.ckpt", self.epoch)))?;
            }
        }
        Ok(())
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut c = self.model.to_container();
        c.push_meta("epoch", self.epoch);
        c.push_meta("adam_step", self.optimizer.step);
        c.push_meta("train_config", serde_json::to_string(&self.config)?);
        for (id, name, _) in self.model.params().iter() {
            for (prefix, moments) in [
                ("adam_m", &self.optimizer.first_moment),
                ("adam_v", &self.optimizer.second_moment),
            ] {
                let m = &moments[id.index()];
                c.push_array(NamedArray::new(
                    format!("{prefix}.{name}"),
                    m.rows(),
                    m.cols(),
                    m.as_slice().iter().map(|v| v.to_f32_lossy()).collect(),
                ));
            }
        }
        c.write(path)
    }

    /// Restores model, optimizer and counters. `config` replaces the stored
    /// training configuration (e.g. to extend `epochs`).
    pub fn resume(path: impl AsRef<Path>, config: Option<TrainConfig>) -> Result<Self> {
        let c = Container::read(path)?;
        let model = Cvae::<T>::from_container(&c)?;
        let stored: TrainConfig = serde_json::from_str(c.meta_str("train_config")?)?;
        let config = config.unwrap_or(stored);
        let mut trainer = Self::new(model, config)?;
        trainer.epoch = c.meta("epoch")?;
        trainer.optimizer.step = c.meta("adam_step")?;
        let params: Vec<_> = trainer
            .model
            .params()
            .iter()
            .map(|(id, name, v)| (id, name.to_string(), v.shape()))
            .collect();
        for (id, name, (rows, cols)) in params {
            for (prefix, first) in [("adam_m", true), ("adam_v", false)] {
                let arr = c.expect_array(&format!("{prefix}.{name}"), rows, cols)?;
                let m = Matrix::from_vec(
                    rows,
                    cols,
                    arr.data.iter().map(|&v| T::from_f32_lossy(v)).collect(),
                );
                if first {
                    trainer.optimizer.first_moment[id.index()] = m;
                } else {
                    trainer.optimizer.second_moment[id.index()] = m;
                }
            }
        }
        Ok(trainer)
    }
}

/// Trains a model from scratch for `config.epochs` epochs.
pub fn train<T: Scalar>(
    model: Cvae<T>,
    data: &[TrainingExample<T>],
    config: &TrainConfig,
) -> Result<(Cvae<T>, LossHistory)> {
    let mut trainer = Trainer::new(model, config.clone())?;
    trainer.run(data)?;
    Ok(trainer.into_parts())
}

/// Mean reconstruction loss when decoding each example from its posterior mean.
pub fn posterior_mean_reconstruction<T: Scalar>(
    model: &Cvae<T>,
    data: &[TrainingExample<T>],
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::validation("empty dataset"));
    }
    let mut sum = 0.0;
    for ex in data {
        let dist = model.encode(&ex.motion, &ex.shape, &ex.audio)?;
        let z = LatentVector::new(dist.mu().to_vec())?;
        let pred = model.decode(&z, &ex.shape, &ex.audio, ex.motion.len())?;
        sum += loss_reconstruction(&pred, &ex.motion)?.to_f64_lossy();
    }
    Ok(sum / data.len() as f64)
}
