use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Token width, also the latent dimension.
    pub d_model: usize,
    pub n_layers_enc: usize,
    pub n_layers_dec: usize,
    pub n_heads: usize,
    /// PPE period in frames.
    pub ppe_period: usize,
    /// Audio feature width fed to the cross-attention projections.
    pub d_audio: usize,
    pub ff_dim: usize,
    /// Half-width of the frame-to-audio attention band; 0 is strictly diagonal.
    pub mask_bandwidth: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 256,
            n_layers_enc: 2,
            n_layers_dec: 2,
            n_heads: 4,
            ppe_period: 30,
            d_audio: 80,
            ff_dim: 512,
            mask_bandwidth: 0,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Small configuration used for desk-scale experiments.
    pub fn small(d_model: usize, d_audio: usize) -> Self {
        Self {
            d_model,
            d_audio,
            ff_dim: 2 * d_model,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_model", self.d_model),
            ("n_layers_enc", self.n_layers_enc),
            ("n_layers_dec", self.n_layers_dec),
            ("n_heads", self.n_heads),
            ("ppe_period", self.ppe_period),
            ("d_audio", self.d_audio),
            ("ff_dim", self.ff_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::validation(format!("model config `{name}` must be positive")));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::validation(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }
}
