//! Single-file run configuration. Every section has defaults, unknown keys
//! are rejected, and command-line flags are applied on top.

use std::path::Path;

use cogesture::dataset::IngestConfig;
use cogesture::diffusion::{SamplerMode, ScheduleConfig, TrainingConfig};
use cogesture::features::FeatureLayout;
use cogesture::nn::ModelConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    /// Cross-local attention half-width W.
    pub window: usize,
    pub init_seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self { hidden: m.hidden, layers: m.layers, heads: m.heads, ffn_dim: m.ffn_dim, window: m.window, init_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub steps: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// γ used for masked training items.
    pub gamma: f64,
    pub mask_probability: f64,
    pub huber_delta: f64,
    pub seed: u64,
    pub parallel: bool,
    /// Checkpoint is rewritten every this many steps (0 = only at the end).
    pub checkpoint_every: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainingConfig::default();
        Self {
            steps: 100_000,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            gamma: t.gamma,
            mask_probability: t.mask_probability,
            huber_delta: t.huber_delta,
            seed: t.rng_seed,
            parallel: t.parallel,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub gamma: f64,
    pub mode: SamplerMode,
    pub seed: u64,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self { gamma: 0.1, mode: SamplerMode::Consistent, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: IngestConfig,
    pub model: ModelSection,
    pub diffusion: ScheduleConfig,
    pub training: TrainSection,
    pub sampling: SampleSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config is always serializable")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.to_json()).expect("json");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            feature_dim: FeatureLayout::new(self.data.joint_count).width(),
            seed_frames: self.data.seed_frames,
            frames: self.data.window_frames,
            hidden: self.model.hidden,
            layers: self.model.layers,
            heads: self.model.heads,
            ffn_dim: self.model.ffn_dim,
            window: self.model.window,
            speech_dim: self.data.speech_dim,
            text_dim: self.data.text_dim,
        }
    }

    pub fn training_config(&self) -> TrainingConfig {
        let t = &self.training;
        TrainingConfig {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            gamma: t.gamma,
            mask_probability: t.mask_probability,
            huber_delta: t.huber_delta,
            rng_seed: t.seed,
            parallel: t.parallel,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.data.validate().map_err(|e| CliError::Input(e.to_string()))?;
        self.model_config().validate().map_err(|e| CliError::Input(e.to_string()))?;
        self.training_config().validate().map_err(|e| CliError::Input(e.to_string()))?;
        self.diffusion.build().map_err(|e| CliError::Input(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(c.model_config(), ModelConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[model]\nhiden = 3\n").is_err());
        assert!(RunConfig::from_toml("[nonsense]\n").is_err());
        let c = RunConfig::from_toml("[model]\nhidden = 64\n[diffusion]\nsteps = 50\nbeta_end = 0.2\n").unwrap();
        assert_eq!(c.model.hidden, 64);
        assert_eq!(c.diffusion.beta_range(), (1e-4, 0.2));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.sampling.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
