//! Checkpoint directory: `manifest.json` naming every tensor plus
//! `tensors.bin`, a flat run of little-endian f64 values.

use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::{Adam, ScheduleConfig, Trainer, TrainingConfig};
use crate::features::FeatureNormalizer;
use crate::nn::{tensor_specs, Denoiser, ModelConfig, NnError, Parameters};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_MANIFEST: &str = "manifest.json";
pub const CHECKPOINT_BLOB: &str = "tensors.bin";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint version {0} is not supported")]
    Version(u32),
    #[error("tensors.bin checksum mismatch")]
    Checksum,
    #[error("tensor {name}: {detail}")]
    Tensor { name: String, detail: String },
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error(transparent)]
    Model(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in values (not bytes) into the blob.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub version: u32,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub schedule: ScheduleConfig,
    pub adam: AdamState,
    pub fps: f64,
    /// BVH HIERARCHY text used when writing samples.
    pub skeleton: Option<String>,
    /// Resolved operator config, echoed verbatim.
    pub run_config: serde_json::Value,
    pub blob: String,
    pub blob_crc32: u32,
    pub tensors: Vec<TensorEntry>,
}

/// Everything needed to resume training or to sample.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Denoiser,
    pub optimizer: Adam,
    pub training: TrainingConfig,
    pub schedule: ScheduleConfig,
    pub normalizer: Option<FeatureNormalizer>,
    pub skeleton: Option<String>,
    pub fps: f64,
    pub run_config: serde_json::Value,
}

impl Checkpoint {
    pub fn from_trainer(
        trainer: &Trainer,
        schedule: ScheduleConfig,
        normalizer: Option<FeatureNormalizer>,
        skeleton: Option<String>,
        fps: f64,
        run_config: serde_json::Value,
    ) -> Self {
        Self {
            model: trainer.model.clone(),
            optimizer: trainer.optimizer.clone(),
            training: trainer.config.clone(),
            schedule,
            normalizer,
            skeleton,
            fps,
            run_config,
        }
    }

    pub fn into_trainer(self) -> Result<Trainer, crate::diffusion::DiffusionError> {
        let schedule = self.schedule.build()?;
        let mut trainer = Trainer::new(self.model, schedule, self.training)?;
        trainer.optimizer = self.optimizer;
        Ok(trainer)
    }

    fn collect(&self) -> (Vec<TensorEntry>, Vec<f64>) {
        let mut entries = Vec::new();
        let mut values = Vec::new();
        let mut push = |name: &str, shape: &[usize], data: &[f64]| {
            entries.push(TensorEntry { name: name.to_string(), shape: shape.to_vec(), offset: values.len() });
            values.extend_from_slice(data);
        };
        self.model.visit("model", &mut |n, s, d| push(n, s, d));
        push("adam.m", &[self.optimizer.m.len()], &self.optimizer.m);
        push("adam.v", &[self.optimizer.v.len()], &self.optimizer.v);
        if let Some(norm) = &self.normalizer {
            push("normalizer.mean", &[norm.dim()], norm.mean.as_slice().expect("contiguous"));
            push("normalizer.std", &[norm.dim()], norm.std.as_slice().expect("contiguous"));
        }
        (entries, values)
    }

    pub fn save(&self, dir: &Path) -> Result<CheckpointManifest, CheckpointError> {
        let (tensors, values) = self.collect();
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        let o = &self.optimizer;
        let manifest = CheckpointManifest {
            version: CHECKPOINT_VERSION,
            model: self.model.config.clone(),
            training: self.training.clone(),
            schedule: self.schedule.clone(),
            adam: AdamState { learning_rate: o.learning_rate, beta1: o.beta1, beta2: o.beta2, eps: o.eps, step: o.step },
            fps: self.fps,
            skeleton: self.skeleton.clone(),
            run_config: self.run_config.clone(),
            blob: CHECKPOINT_BLOB.into(),
            blob_crc32: crc32fast::hash(&bytes),
            tensors,
        };
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(CHECKPOINT_BLOB), &bytes)?;
        std::fs::write(dir.join(CHECKPOINT_MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<Self, CheckpointError> {
        let manifest: CheckpointManifest = serde_json::from_slice(&std::fs::read(dir.join(CHECKPOINT_MANIFEST))?)?;
        if manifest.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(manifest.version));
        }
        let bytes = std::fs::read(dir.join(&manifest.blob))?;
        if crc32fast::hash(&bytes) != manifest.blob_crc32 || bytes.len() % 8 != 0 {
            return Err(CheckpointError::Checksum);
        }
        let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let find = |name: &str, shape: &[usize]| -> Result<&[f64], CheckpointError> {
            let e = manifest
                .tensors
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| CheckpointError::MissingTensor(name.to_string()))?;
            if e.shape != shape {
                return Err(CheckpointError::Tensor {
                    name: name.into(),
                    detail: format!("shape {:?}, model expects {shape:?}", e.shape),
                });
            }
            let n: usize = shape.iter().product();
            values.get(e.offset..e.offset + n).ok_or_else(|| CheckpointError::Tensor {
                name: name.into(),
                detail: "runs past the end of tensors.bin".into(),
            })
        };

        let mut model = Denoiser::new(manifest.model.clone(), 0)?;
        let mut failure = None;
        model.visit_mut("model", &mut |n, s, d| {
            if failure.is_some() {
                return;
            }
            match find(n, s) {
                Ok(src) => d.copy_from_slice(src),
                Err(e) => failure = Some(e),
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        let count: usize = tensor_specs(&model).iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        let a = &manifest.adam;
        let optimizer = Adam {
            learning_rate: a.learning_rate,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            step: a.step,
            m: find("adam.m", &[count])?.to_vec(),
            v: find("adam.v", &[count])?.to_vec(),
        };
        let d = manifest.model.feature_dim;
        let normalizer = if manifest.tensors.iter().any(|e| e.name == "normalizer.mean") {
            Some(FeatureNormalizer::new(
                Array1::from(find("normalizer.mean", &[d])?.to_vec()),
                Array1::from(find("normalizer.std", &[d])?.to_vec()),
            ))
        } else {
            None
        };
        Ok(Self {
            model,
            optimizer,
            training: manifest.training,
            schedule: manifest.schedule,
            normalizer,
            skeleton: manifest.skeleton,
            fps: manifest.fps,
            run_config: manifest.run_config,
        })
    }
}
