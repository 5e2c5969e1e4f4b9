//! Noise schedule, training objective, optimizer and guided sampling.

pub mod sample;
pub mod schedule;
pub mod train;

use thiserror::Error;

pub use sample::{
    generate_long, guided_predict, sample_segment, Guidance, LongGeneration, LongOptions, SamplerMode, SegmentInputs,
};
pub use schedule::{make_schedule, q_sample, q_sample_with_alpha_bar, BetaMode, NoiseSchedule, ScheduleConfig};
pub use train::{
    huber_grad, huber_loss, item_rng, training_step, Adam, StepOutput, StepStats, Trainer, TrainingConfig,
    TrainingExample,
};

use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("timestep {t} outside [1, {steps}]")]
    Timestep { t: usize, steps: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite gradient at step {0}")]
    NonFinite(u64),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("a fitted normalizer is required")]
    MissingNormalizer,
    #[error(transparent)]
    Model(#[from] NnError),
}
