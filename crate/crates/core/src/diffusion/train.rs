use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::schedule::{q_sample, NoiseSchedule};
use super::DiffusionError;
use crate::conditioning::ConditionBundle;
use crate::nn::{assign_flat, flatten, param_count, zeros_like, Denoiser, Parameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub mask_probability: f64,
    pub huber_delta: f64,
    pub rng_seed: u64,
    /// Run batch items on the rayon pool. The reduction order is fixed, so
    /// results do not depend on this flag.
    pub parallel: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-5,
            batch_size: 640,
            gamma: 0.1,
            mask_probability: 0.1,
            huber_delta: 1.0,
            rng_seed: 0,
            parallel: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), DiffusionError> {
        if !(0.0..=1.0).contains(&self.mask_probability) {
            return Err(DiffusionError::Config(format!("mask_probability {} outside [0, 1]", self.mask_probability)));
        }
        if self.huber_delta <= 0.0 || self.learning_rate <= 0.0 || self.batch_size == 0 {
            return Err(DiffusionError::Config("huber_delta, learning_rate and batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            log::warn!("gamma {} outside [0, 1]: guidance extrapolates", self.gamma);
        }
        Ok(())
    }
}

/// One training window with its condition.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub x0: Array2<f64>,
    pub cond: ConditionBundle,
}

/// Elementwise Huber loss, mean-reduced.
pub fn huber_loss(x0: ArrayView2<f64>, x0_hat: ArrayView2<f64>, delta: f64) -> Result<f64, DiffusionError> {
    if x0.dim() != x0_hat.dim() {
        return Err(DiffusionError::Shape(format!("{:?} vs {:?}", x0.dim(), x0_hat.dim())));
    }
    let n = x0.len().max(1) as f64;
    let sum: f64 = x0
        .iter()
        .zip(x0_hat.iter())
        .map(|(a, b)| {
            let d = (b - a).abs();
            if d <= delta {
                0.5 * d * d
            } else {
                delta * (d - 0.5 * delta)
            }
        })
        .sum();
    Ok(sum / n)
}

/// dL/dx̂0 of [`huber_loss`].
pub fn huber_grad(x0: ArrayView2<f64>, x0_hat: ArrayView2<f64>, delta: f64) -> Array2<f64> {
    let n = x0.len().max(1) as f64;
    let mut g = &x0_hat - &x0;
    g.mapv_inplace(|d| d.clamp(-delta, delta) / n);
    g
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent generator for `(seed, step, item)`.
pub fn item_rng(seed: u64, step: u64, item: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(step ^ splitmix64(item))))
}

pub(crate) fn normal_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub loss: f64,
    pub t_mean: f64,
    pub masked: usize,
    /// Mean gradient over the batch, flattened in parameter visit order.
    pub grad: Vec<f64>,
}

struct ItemResult {
    loss: f64,
    t: f64,
    masked: usize,
    grad: Vec<f64>,
}

impl ItemResult {
    fn merge(mut self, other: ItemResult) -> ItemResult {
        self.loss += other.loss;
        self.t += other.t;
        self.masked += other.masked;
        for (a, b) in self.grad.iter_mut().zip(&other.grad) {
            *a += b;
        }
        self
    }
}

fn item_step(
    model: &Denoiser,
    example: &TrainingExample,
    schedule: &NoiseSchedule,
    config: &TrainingConfig,
    mut rng: ChaCha8Rng,
) -> Result<ItemResult, DiffusionError> {
    let masked = rng.random_bool(config.mask_probability);
    let t = rng.random_range(1..=schedule.steps());
    let (m, d) = example.x0.dim();
    let eps = normal_matrix(m, d, &mut rng);
    let x_t = q_sample(example.x0.view(), t, eps.view(), schedule)?;
    let c1 = &example.cond;
    let mut grad = zeros_like(model);
    let loss = if masked {
        let c2 = c1.unconditional();
        let (p1, cache1) = model.forward(x_t.view(), t, c1)?;
        let (p2, cache2) = model.forward(x_t.view(), t, &c2)?;
        let pred = &p1 * config.gamma + &p2 * (1.0 - config.gamma);
        let g = huber_grad(example.x0.view(), pred.view(), config.huber_delta);
        model.backward(&cache1, (&g * config.gamma).view(), &mut grad);
        model.backward(&cache2, (&g * (1.0 - config.gamma)).view(), &mut grad);
        huber_loss(example.x0.view(), pred.view(), config.huber_delta)?
    } else {
        // c2 = c1: the combination collapses to a single branch
        let (pred, cache) = model.forward(x_t.view(), t, c1)?;
        let g = huber_grad(example.x0.view(), pred.view(), config.huber_delta);
        model.backward(&cache, g.view(), &mut grad);
        huber_loss(example.x0.view(), pred.view(), config.huber_delta)?
    };
    Ok(ItemResult { loss, t: t as f64, masked: masked as usize, grad: flatten(&grad) })
}

fn tree_reduce(
    model: &Denoiser,
    batch: &[TrainingExample],
    offset: usize,
    schedule: &NoiseSchedule,
    config: &TrainingConfig,
    step: u64,
) -> Result<ItemResult, DiffusionError> {
    if batch.len() == 1 {
        let rng = item_rng(config.rng_seed, step, offset as u64);
        return item_step(model, &batch[0], schedule, config, rng);
    }
    let mid = batch.len() / 2;
    let (left, right) = batch.split_at(mid);
    let (a, b) = if config.parallel {
        rayon::join(
            || tree_reduce(model, left, offset, schedule, config, step),
            || tree_reduce(model, right, offset + mid, schedule, config, step),
        )
    } else {
        (
            tree_reduce(model, left, offset, schedule, config, step),
            tree_reduce(model, right, offset + mid, schedule, config, step),
        )
    };
    Ok(a?.merge(b?))
}

/// Loss and mean gradient for one batch. Item `i` draws its mask, timestep
/// and noise from [`item_rng`]`(seed, step, i)`; per-item results are summed
/// over a fixed binary tree so serial and parallel runs agree bitwise.
pub fn training_step(
    model: &Denoiser,
    batch: &[TrainingExample],
    schedule: &NoiseSchedule,
    config: &TrainingConfig,
    step: u64,
) -> Result<StepOutput, DiffusionError> {
    if batch.is_empty() {
        return Err(DiffusionError::EmptyBatch);
    }
    let total = tree_reduce(model, batch, 0, schedule, config, step)?;
    let n = batch.len() as f64;
    let grad: Vec<f64> = total.grad.into_iter().map(|g| g / n).collect();
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(DiffusionError::NonFinite(step));
    }
    Ok(StepOutput { loss: total.loss / n, t_mean: total.t / n, masked: total.masked, grad })
}

/// Adam without weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64, params: usize) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; params], v: vec![0.0; params] }
    }

    pub fn update<P: Parameters>(&mut self, params: &mut P, grad: &[f64]) {
        let mut flat = flatten(params);
        assert_eq!(flat.len(), grad.len(), "gradient length");
        assert_eq!(self.m.len(), grad.len(), "optimizer state length");
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..flat.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            flat[i] -= self.learning_rate * mhat / (vhat.sqrt() + self.eps);
        }
        assign_flat(params, &flat);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: u64,
    pub t_mean: f64,
    pub loss: f64,
    pub grad_norm: f64,
}

/// Model plus optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Denoiser,
    pub optimizer: Adam,
    pub schedule: NoiseSchedule,
    pub config: TrainingConfig,
}

impl Trainer {
    pub fn new(model: Denoiser, schedule: NoiseSchedule, config: TrainingConfig) -> Result<Self, DiffusionError> {
        config.validate()?;
        let optimizer = Adam::new(config.learning_rate, param_count(&model));
        Ok(Self { model, optimizer, schedule, config })
    }

    /// Number of updates applied so far.
    pub fn step_count(&self) -> u64 {
        self.optimizer.step
    }

    pub fn step(&mut self, batch: &[TrainingExample]) -> Result<StepStats, DiffusionError> {
        let step = self.optimizer.step;
        let out = training_step(&self.model, batch, &self.schedule, &self.config, step)?;
        let grad_norm = out.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        self.optimizer.update(&mut self.model, &out.grad);
        Ok(StepStats { step: step + 1, t_mean: out.t_mean, loss: out.loss, grad_norm })
    }
}
