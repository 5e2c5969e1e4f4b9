use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::schedule::{q_sample, NoiseSchedule};
use super::train::normal_matrix;
use super::DiffusionError;
use crate::conditioning::{ConditionBundle, Emotion};
use crate::features::{FeatureLayout, FeatureNormalizer, GestureFeatureSequence};
use crate::nn::Denoiser;

/// How x̂0 is carried from step t to t−1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMode {
    /// √ᾱ_{t−1}·x̂0 + √(1−ᾱ_{t−1}−σ_t²)·ε + σ_t·z.
    #[default]
    Consistent,
    /// Full q-sample to t−1 followed by an extra σ_t·z.
    Literal,
}

/// x̂0 = γ·G(x_t, t, c1) + (1−γ)·G(x_t, t, c2). γ = 1 and γ = 0 evaluate
/// only the selected branch.
pub fn guided_predict(
    model: &Denoiser,
    x_t: ArrayView2<f64>,
    t: usize,
    c1: &ConditionBundle,
    c2: &ConditionBundle,
    gamma: f64,
) -> Result<Array2<f64>, DiffusionError> {
    if gamma == 1.0 {
        return Ok(model.predict(x_t, t, c1)?);
    }
    if gamma == 0.0 {
        return Ok(model.predict(x_t, t, c2)?);
    }
    let a = model.predict(x_t, t, c1)?;
    let b = model.predict(x_t, t, c2)?;
    Ok(a * gamma + b * (1.0 - gamma))
}

/// Reverse process from x_T ~ N(0, I); returns the x̂0 predicted at t = 1.
pub fn sample_segment(
    model: &Denoiser,
    cond: &ConditionBundle,
    cond_alt: &ConditionBundle,
    gamma: f64,
    schedule: &NoiseSchedule,
    mode: SamplerMode,
    rng: &mut impl Rng,
) -> Result<Array2<f64>, DiffusionError> {
    let (m, d) = (cond.frames(), model.config.feature_dim);
    let mut x = normal_matrix(m, d, rng);
    let mut t = schedule.steps();
    loop {
        let x0_hat = guided_predict(model, x.view(), t, cond, cond_alt, gamma)?;
        if t == 1 {
            return Ok(x0_hat);
        }
        let eps = normal_matrix(m, d, rng);
        let z = normal_matrix(m, d, rng);
        let sigma = schedule.sigma(t);
        x = match mode {
            SamplerMode::Consistent => {
                let ab = schedule.alpha_bar_prev(t);
                let dir = (1.0 - ab - sigma * sigma).max(0.0).sqrt();
                &x0_hat * ab.sqrt() + &eps * dir + &z * sigma
            }
            SamplerMode::Literal => q_sample(x0_hat.view(), t - 1, eps.view(), schedule)? + &z * sigma,
        };
        t -= 1;
    }
}

/// Second branch of the guided prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Guidance {
    /// c2 = c_∅ (seed and emotion masked).
    Unconditional,
    /// c2 uses another emotion (interpolation between two styles).
    Emotion(Emotion),
}

#[derive(Debug, Clone)]
pub struct LongGeneration {
    /// Denormalized output, `segments · M` frames.
    pub features: GestureFeatureSequence,
    /// Normalized model output, same shape.
    pub normalized: Array2<f64>,
    /// Normalized seed used for each segment.
    pub seeds: Vec<Array2<f64>>,
}

/// Frame-aligned speech and text for one segment.
#[derive(Debug, Clone)]
pub struct SegmentInputs {
    pub speech: Array2<f64>,
    pub text: Array2<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct LongOptions {
    pub emotion: Emotion,
    pub guidance: Guidance,
    pub gamma: f64,
    pub mode: SamplerMode,
    pub fps: f64,
}

/// Segment-by-segment generation: the first seed is the dataset mean pose
/// repeated N times, each later seed is the last N frames of the previous
/// segment's output.
pub fn generate_long(
    model: &Denoiser,
    segments: &[SegmentInputs],
    normalizer: Option<&FeatureNormalizer>,
    schedule: &NoiseSchedule,
    options: &LongOptions,
    rng: &mut impl Rng,
) -> Result<LongGeneration, DiffusionError> {
    let normalizer = normalizer.ok_or(DiffusionError::MissingNormalizer)?;
    let c = &model.config;
    if normalizer.dim() != c.feature_dim {
        return Err(DiffusionError::Shape(format!("normalizer width {} for D={}", normalizer.dim(), c.feature_dim)));
    }
    let joint_count = FeatureLayout::from_width(c.feature_dim)
        .ok_or_else(|| DiffusionError::Shape(format!("D={} is not a feature-layout width", c.feature_dim)))?
        .joint_count;
    let n = c.seed_frames;
    let mean_row = normalizer.normalize_rows(&normalizer.mean.clone().insert_axis(Axis(0)));
    let mut seed = mean_row.broadcast((n, c.feature_dim)).expect("mean width").to_owned();
    let mut outputs = Vec::with_capacity(segments.len());
    let mut seeds = Vec::with_capacity(segments.len());
    for seg in segments {
        let cond = ConditionBundle {
            seed: seed.clone(),
            emotion: options.emotion.one_hot(),
            speech: seg.speech.clone(),
            text: seg.text.clone(),
            seed_mask: false,
            emotion_mask: false,
        };
        let alt = match options.guidance {
            Guidance::Unconditional => cond.unconditional(),
            Guidance::Emotion(e) => cond.with_emotion(e),
        };
        let out = sample_segment(model, &cond, &alt, options.gamma, schedule, options.mode, rng)?;
        if out.nrows() < n {
            return Err(DiffusionError::Shape(format!("segment of {} frames shorter than seed N={n}", out.nrows())));
        }
        seeds.push(seed);
        seed = out.slice(s![out.nrows() - n.., ..]).to_owned();
        outputs.push(out);
    }
    let views: Vec<_> = outputs.iter().map(|o| o.view()).collect();
    let normalized = if views.is_empty() {
        Array2::zeros((0, c.feature_dim))
    } else {
        concatenate(Axis(0), &views).expect("equal widths")
    };
    let data = normalizer.denormalize_rows(&normalized);
    let features = GestureFeatureSequence::new(data, options.fps, joint_count)
        .map_err(|e| DiffusionError::Shape(e.to_string()))?;
    Ok(LongGeneration { features, normalized, seeds })
}
