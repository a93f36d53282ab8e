//! Run configuration loaded from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conditioning::{EmbedderConfig, HashingTextEncoder, TextEncoder};
use crate::error::{Error, Result};
use crate::networks::NetworkConfig;
use crate::objectives::LossWeights;
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Only `"hashing"` ships; the trait allows plugging in another encoder.
    pub text: String,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { text: "hashing".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub network: NetworkConfig,
    pub embedder: EmbedderConfig,
    pub weights: LossWeights,
    pub encoders: EncoderConfig,
}

impl RunConfig {
    /// A small configuration that trains in seconds on one CPU core.
    pub fn tiny() -> Self {
        let mut cfg = Self::default();
        cfg.embedder = EmbedderConfig {
            token_dim: 48,
            noise_dim: 8,
            text_string_dim: 24,
            class_dim: 8,
            length_dim: 8,
            patch_dim: 40,
            background_patch_size: 8,
            working_resolution: 32,
            foreground_patch_resolution: 16,
        };
        cfg.network = NetworkConfig {
            model_dim: 32,
            num_heads: 2,
            encoder_depth: 1,
            decoder_depth: 1,
            dropout: 0.0,
            max_elements: 8,
            max_chars: 24,
            background_reconstruction_resolution: 8,
            patch_reconstruction_resolution: 16,
            patch_decoder_resolution: 8,
        };
        cfg.train.batch_size = 8;
        cfg.train.learning_rate = 1e-3;
        cfg.train.max_steps = 50;
        cfg
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.network.validate()?;
        self.embedder.validate()?;
        self.weights.validate()?;
        self.text_encoder().map(|_| ())
    }

    pub fn text_encoder(&self) -> Result<Box<dyn TextEncoder + Send + Sync>> {
        match self.encoders.text.as_str() {
            "hashing" => Ok(Box::new(HashingTextEncoder::new(self.embedder.text_string_dim))),
            other => Err(Error::config(format!("unknown text encoder {other:?}"))),
        }
    }
}
