//! Transformer conditional VAE mapping `(motion, shape, audio)` to a latent
//! Gaussian and `(z, shape, audio)` back to motion.
//!
//! Encoder tokens are `[mu, sigma, proj(m_t) + shape_emb]`; decoder tokens
//! are `[shape_emb, z, ..., z]`. Both streams get PPE and cross-attend to
//! their projected audio under the frame-aligned mask. The decoder drops its
//! first output token before the motion projection.

mod config;
mod layers;
mod mask;
mod ppe;

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::ModelConfig;
pub use mask::{alignment_mask, banded_alignment_mask};
pub use ppe::ppe;

use crate::autograd::{AttnMask, Graph, NodeId, ParamId, ParamStore};
use crate::container::{Container, NamedArray};
use crate::error::{ensure_dim, Error, Result};
use crate::motion::{MotionSequence, ShapeParams, DEFAULT_FPS, FRAME_DIM, SHAPE_DIM};
use crate::scalar::Scalar;
use crate::tensor::Matrix;
use layers::{DecoderStack, Linear};

/// Diagonal Gaussian posterior over the latent.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentDistribution<T> {
    mu: Vec<T>,
    sigma: Vec<T>,
}

impl<T: Scalar> LatentDistribution<T> {
    pub fn new(mu: Vec<T>, sigma: Vec<T>) -> Result<Self> {
        ensure_dim("latent sigma", mu.len(), sigma.len())?;
        if mu.iter().chain(&sigma).any(|v| !v.is_finite()) {
            return Err(Error::validation("latent parameters must be finite"));
        }
        if sigma.iter().any(|&s| !(s > T::zero())) {
            return Err(Error::validation("latent sigma must be strictly positive"));
        }
        Ok(Self { mu, sigma })
    }

    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    pub fn sigma(&self) -> &[T] {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentVector<T> {
    z: Vec<T>,
}

impl<T: Scalar> LatentVector<T> {
    pub fn new(z: Vec<T>) -> Result<Self> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("latent vector must be finite"));
        }
        Ok(Self { z })
    }

    pub fn as_slice(&self) -> &[T] {
        &self.z
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }
}

/// `z = mu + sigma * noise`
pub fn reparameterize<T: Scalar>(dist: &LatentDistribution<T>, noise: &[T]) -> Result<LatentVector<T>> {
    ensure_dim("reparameterization noise", dist.dim(), noise.len())?;
    LatentVector::new(
        dist.mu
            .iter()
            .zip(&dist.sigma)
            .zip(noise)
            .map(|((&m, &s), &e)| m + s * e)
            .collect(),
    )
}

#[derive(Clone, Debug)]
struct EncoderParams {
    motion_proj: Linear,
    shape_embed: Linear,
    audio_proj: Linear,
    mu_token: ParamId,
    sigma_token: ParamId,
    stack: DecoderStack,
}

#[derive(Clone, Debug)]
struct DecoderParams {
    shape_embed: Linear,
    audio_proj: Linear,
    stack: DecoderStack,
    motion_out: Linear,
}

#[derive(Clone, Debug)]
pub struct Cvae<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    encoder: EncoderParams,
    decoder: DecoderParams,
}

/// Graph handles for one encoder pass.
pub(crate) struct EncoderOutput {
    pub mu: NodeId,
    pub sigma: NodeId,
}

impl<T: Scalar> Cvae<T> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut store = ParamStore::new();
        let d = config.d_model;
        let encoder = EncoderParams {
            motion_proj: Linear::new(&mut store, "enc.motion_proj", FRAME_DIM, d, &mut rng),
            shape_embed: Linear::new(&mut store, "enc.shape_embed", SHAPE_DIM, d, &mut rng),
            audio_proj: Linear::new(&mut store, "enc.audio_proj", config.d_audio, d, &mut rng),
            mu_token: store.add_trunc_normal("enc.mu_token", 1, d, 0.02, &mut rng),
            sigma_token: store.add_trunc_normal("enc.sigma_token", 1, d, 0.02, &mut rng),
            stack: DecoderStack::new(
                &mut store,
                "enc.stack",
                config.n_layers_enc,
                d,
                config.n_heads,
                config.ff_dim,
                &mut rng,
            ),
        };
        let decoder = DecoderParams {
            shape_embed: Linear::new(&mut store, "dec.shape_embed", SHAPE_DIM, d, &mut rng),
            audio_proj: Linear::new(&mut store, "dec.audio_proj", config.d_audio, d, &mut rng),
            stack: DecoderStack::new(
                &mut store,
                "dec.stack",
                config.n_layers_dec,
                d,
                config.n_heads,
                config.ff_dim,
                &mut rng,
            ),
            motion_out: Linear::new(&mut store, "dec.motion_out", d, FRAME_DIM, &mut rng),
        };
        Ok(Self {
            config,
            params: store,
            encoder,
            decoder,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn latent_dim(&self) -> usize {
        self.config.d_model
    }

    fn check_audio(&self, audio: &Matrix<T>, frames: usize) -> Result<()> {
        ensure_dim("aligned audio rows", frames, audio.rows())?;
        ensure_dim("audio feature width", self.config.d_audio, audio.cols())?;
        if !audio.is_finite() {
            return Err(Error::validation("audio features contain non-finite values"));
        }
        Ok(())
    }

    fn cross_mask(&self, frames: usize, n_extra: usize) -> Result<Arc<AttnMask>> {
        Ok(Arc::new(banded_alignment_mask(
            frames,
            frames,
            n_extra,
            self.config.mask_bandwidth,
        )?))
    }

    pub(crate) fn encode_graph(
        &self,
        g: &mut Graph<'_, T>,
        motion: &Matrix<T>,
        shape: &ShapeParams<T>,
        audio: &Matrix<T>,
    ) -> Result<EncoderOutput> {
        let frames = motion.rows();
        ensure_dim("motion frame width", FRAME_DIM, motion.cols())?;
        self.check_audio(audio, frames)?;
        let enc = &self.encoder;
        let d = self.config.d_model;

        let m = g.input(motion.clone());
        let m = enc.motion_proj.forward(g, m);
        let s = g.input(shape.to_row());
        let s = enc.shape_embed.forward(g, s);
        let s = g.repeat_row(s, frames);
        let frames_tok = g.add(m, s);
        let mu_tok = g.param(enc.mu_token);
        let sigma_tok = g.param(enc.sigma_token);
        let tokens = g.concat_rows(&[mu_tok, sigma_tok, frames_tok]);
        let pos = g.input(ppe(frames + 2, d, self.config.ppe_period));
        let tokens = g.add(tokens, pos);

        let a = g.input(audio.clone());
        let memory = enc.audio_proj.forward(g, a);
        let mask = self.cross_mask(frames, 2)?;
        let out = enc.stack.forward(g, tokens, memory, &mask);

        let mu = g.slice_rows(out, 0, 1);
        let raw_sigma = g.slice_rows(out, 1, 1);
        let sigma = g.softplus(raw_sigma);
        Ok(EncoderOutput { mu, sigma })
    }

    /// `z` is a `1 x d` node.
    pub(crate) fn decode_graph(
        &self,
        g: &mut Graph<'_, T>,
        z: NodeId,
        shape: &ShapeParams<T>,
        audio: &Matrix<T>,
        frames: usize,
    ) -> Result<NodeId> {
        if frames == 0 {
            return Err(Error::validation("cannot decode zero frames"));
        }
        self.check_audio(audio, frames)?;
        ensure_dim("latent width", self.config.d_model, g.value(z).cols())?;
        let dec = &self.decoder;
        let d = self.config.d_model;

        let s = g.input(shape.to_row());
        let s = dec.shape_embed.forward(g, s);
        let zs = g.repeat_row(z, frames);
        let tokens = g.concat_rows(&[s, zs]);
        let pos = g.input(ppe(frames + 1, d, self.config.ppe_period));
        let tokens = g.add(tokens, pos);

        let a = g.input(audio.clone());
        let memory = dec.audio_proj.forward(g, a);
        let mask = self.cross_mask(frames, 1)?;
        let out = dec.stack.forward(g, tokens, memory, &mask);
        let out = g.slice_rows(out, 1, frames);
        Ok(dec.motion_out.forward(g, out))
    }

    /// Posterior parameters for a ground-truth sequence.
    pub fn encode(
        &self,
        seq: &MotionSequence<T>,
        shape: &ShapeParams<T>,
        audio: &Matrix<T>,
    ) -> Result<LatentDistribution<T>> {
        let mut g = Graph::new(&self.params);
        let out = self.encode_graph(&mut g, seq.as_matrix(), shape, audio)?;
        LatentDistribution::new(g.value(out.mu).as_slice().to_vec(), g.value(out.sigma).as_slice().to_vec())
    }

    /// Decodes `frames` motion frames from one latent.
    pub fn decode(
        &self,
        z: &LatentVector<T>,
        shape: &ShapeParams<T>,
        audio: &Matrix<T>,
        frames: usize,
    ) -> Result<MotionSequence<T>> {
        ensure_dim("latent width", self.config.d_model, z.dim())?;
        let mut g = Graph::new(&self.params);
        let zn = g.input(Matrix::row_vector(z.as_slice()));
        let out = self.decode_graph(&mut g, zn, shape, audio, frames)?;
        MotionSequence::from_matrix(g.value(out).clone(), DEFAULT_FPS)
    }

    pub fn to_container(&self) -> Container {
        let c = &self.config;
        let mut out = Container::new("checkpoint")
            .with_meta("d_model", c.d_model)
            .with_meta("n_layers_enc", c.n_layers_enc)
            .with_meta("n_layers_dec", c.n_layers_dec)
            .with_meta("n_heads", c.n_heads)
            .with_meta("ppe_period", c.ppe_period)
            .with_meta("d_audio", c.d_audio)
            .with_meta("ff_dim", c.ff_dim)
            .with_meta("mask_bandwidth", c.mask_bandwidth)
            .with_meta("init_seed", c.init_seed);
        for (_, name, v) in self.params.iter() {
            out.push_array(NamedArray::new(
                format!("param.{name}"),
                v.rows(),
                v.cols(),
                v.as_slice().iter().map(|x| x.to_f32_lossy()).collect(),
            ));
        }
        out
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind("checkpoint")?;
        let config = ModelConfig {
            d_model: c.meta("d_model")?,
            n_layers_enc: c.meta("n_layers_enc")?,
            n_layers_dec: c.meta("n_layers_dec")?,
            n_heads: c.meta("n_heads")?,
            ppe_period: c.meta("ppe_period")?,
            d_audio: c.meta("d_audio")?,
            ff_dim: c.meta("ff_dim")?,
            mask_bandwidth: c.meta("mask_bandwidth")?,
            init_seed: c.meta("init_seed")?,
        };
        let mut model = Self::new(config)?;
        let ids: Vec<ParamId> = model.params.ids().collect();
        for id in ids {
            let name = model.params.name(id).to_string();
            let (rows, cols) = model.params.value(id).shape();
            let arr = c.expect_array(&format!("param.{name}"), rows, cols)?;
            *model.params.value_mut(id) = Matrix::from_vec(
                rows,
                cols,
                arr.data.iter().map(|&v| T::from_f32_lossy(v)).collect(),
            );
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn tiny() -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_layers_enc: 1,
            n_layers_dec: 1,
            n_heads: 2,
            ppe_period: 5,
            d_audio: 6,
            ff_dim: 24,
            mask_bandwidth: 0,
            init_seed: 4,
        }
    }

    fn inputs(rng: &mut ChaCha8Rng, frames: usize) -> (MotionSequence<f64>, ShapeParams<f64>, Matrix<f64>) {
        let motion = MotionSequence::from_matrix(
            Matrix::from_fn(frames, FRAME_DIM, |_, _| rng.random_range(-1.0..1.0)),
            30.0,
        )
        .unwrap();
        let shape = ShapeParams::new((0..SHAPE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let audio = Matrix::from_fn(frames, 6, |_, _| rng.random_range(-1.0..1.0));
        (motion, shape, audio)
    }

    #[test]
    fn encode_shapes_and_positivity() {
        let model = Cvae::<f64>::new(tiny()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (m, s, a) = inputs(&mut rng, 7);
        let dist = model.encode(&m, &s, &a).unwrap();
        assert_eq!(dist.mu().len(), 16);
        assert_eq!(dist.sigma().len(), 16);
        assert!(dist.sigma().iter().all(|&v| v > 0.0));
        assert_eq!(model.encode(&m, &s, &a).unwrap(), dist);
    }

    #[test]
    fn decode_length_and_determinism() {
        let model = Cvae::<f32>::new(tiny()).unwrap();
        let z = LatentVector::new(vec![0.3f32; 16]).unwrap();
        let audio = Matrix::from_fn(9, 6, |r, c| ((r * 6 + c) as f32).sin());
        let a = model.decode(&z, &ShapeParams::zeros(), &audio, 9).unwrap();
        let b = model.decode(&z, &ShapeParams::zeros(), &audio, 9).unwrap();
        assert_eq!(a.len(), 9);
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_audio_is_rejected() {
        let model = Cvae::<f32>::new(tiny()).unwrap();
        let z = LatentVector::new(vec![0.0f32; 16]).unwrap();
        let audio = Matrix::zeros(8, 6);
        assert!(model.decode(&z, &ShapeParams::zeros(), &audio, 9).is_err());
        assert!(model.decode(&z, &ShapeParams::zeros(), &Matrix::zeros(9, 5), 9).is_err());
        let short = LatentVector::new(vec![0.0f32; 15]).unwrap();
        assert!(model.decode(&short, &ShapeParams::zeros(), &Matrix::zeros(9, 6), 9).is_err());
    }

    #[test]
    fn reparameterization_arithmetic() {
        let dist = LatentDistribution::new(vec![1.0, 2.0], vec![1.0, 3.0]).unwrap();
        assert_eq!(reparameterize(&dist, &[1.0, -1.0]).unwrap().as_slice(), &[2.0, -1.0]);
        assert_eq!(reparameterize(&dist, &[0.0, 0.0]).unwrap().as_slice(), dist.mu());
        let tight = LatentDistribution::<f64>::new(vec![0.5], vec![1e-12]).unwrap();
        assert!((reparameterize(&tight, &[3.0]).unwrap().as_slice()[0] - 0.5).abs() < 1e-11);
        assert!(LatentDistribution::new(vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn distinct_latents_decode_differently() {
        let model = Cvae::<f64>::new(tiny()).unwrap();
        let audio = Matrix::from_fn(6, 6, |r, c| (r as f64 - c as f64) * 0.1);
        let a = model
            .decode(&LatentVector::new(vec![0.0; 16]).unwrap(), &ShapeParams::zeros(), &audio, 6)
            .unwrap();
        let b = model
            .decode(&LatentVector::new(vec![1.0; 16]).unwrap(), &ShapeParams::zeros(), &audio, 6)
            .unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn checkpoint_round_trip_in_f32_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = Cvae::<f32>::new(tiny()).unwrap();
        model.save(&path).unwrap();
        let back = Cvae::<f32>::load(&path).unwrap();
        assert_eq!(back.params(), model.params());
        assert_eq!(back.config(), model.config());
    }
}
