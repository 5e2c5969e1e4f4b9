use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::DiffusionError;

/// Which β range the schedule uses when none is given explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BetaMode {
    /// β linear from 1e-4 to 0.02 (at T = 1000).
    #[default]
    Standard,
    /// β linear from 0.5 to 0.999, read directly as β values.
    Wide,
}

impl BetaMode {
    pub fn default_range(self) -> (f64, f64) {
        match self {
            BetaMode::Standard => (1e-4, 0.02),
            BetaMode::Wide => (0.5, 0.999),
        }
    }
}

/// Serializable description of a schedule. Explicit β bounds override the
/// mode's range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_mode: BetaMode,
    pub beta_start: Option<f64>,
    pub beta_end: Option<f64>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { steps: 1000, beta_mode: BetaMode::Standard, beta_start: None, beta_end: None }
    }
}

impl ScheduleConfig {
    pub fn beta_range(&self) -> (f64, f64) {
        let (a, b) = self.beta_mode.default_range();
        (self.beta_start.unwrap_or(a), self.beta_end.unwrap_or(b))
    }

    pub fn build(&self) -> Result<NoiseSchedule, DiffusionError> {
        let (a, b) = self.beta_range();
        make_schedule(self.steps, a, b)
    }
}

/// Per-step quantities, 1-based in the public accessors.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    pub sigma: Vec<f64>,
}

pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule, DiffusionError> {
    if steps == 0 || !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(DiffusionError::Schedule(format!("T={steps}, beta {beta_start}..{beta_end}")));
    }
    let beta: Vec<f64> = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(steps);
    let mut acc = 1.0;
    for a in &alpha {
        acc *= a;
        alpha_bar.push(acc);
    }
    let sigma = (0..steps)
        .map(|i| {
            let prev = if i == 0 { 1.0 } else { alpha_bar[i - 1] };
            if i == 0 {
                0.0
            } else {
                (beta[i] * (1.0 - prev) / (1.0 - alpha_bar[i])).sqrt()
            }
        })
        .collect();
    Ok(NoiseSchedule { beta, alpha, alpha_bar, sigma })
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn check_t(&self, t: usize) -> Result<(), DiffusionError> {
        if t == 0 || t > self.steps() {
            Err(DiffusionError::Timestep { t, steps: self.steps() })
        } else {
            Ok(())
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t - 1]
    }

    /// ᾱ_{t−1}, with ᾱ_0 = 1.
    pub fn alpha_bar_prev(&self, t: usize) -> f64 {
        if t <= 1 {
            1.0
        } else {
            self.alpha_bar[t - 2]
        }
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t - 1]
    }

    /// Step whose ᾱ is closest to `target`.
    pub fn nearest_alpha_bar(&self, target: f64) -> usize {
        (1..=self.steps())
            .min_by(|&a, &b| (self.alpha_bar(a) - target).abs().total_cmp(&(self.alpha_bar(b) - target).abs()))
            .unwrap_or(1)
    }
}

/// x_t = √ᾱ_t·x0 + √(1−ᾱ_t)·ε.
pub fn q_sample(
    x0: ArrayView2<f64>,
    t: usize,
    eps: ArrayView2<f64>,
    schedule: &NoiseSchedule,
) -> Result<Array2<f64>, DiffusionError> {
    schedule.check_t(t)?;
    if x0.dim() != eps.dim() {
        return Err(DiffusionError::Shape(format!("x0 {:?}, eps {:?}", x0.dim(), eps.dim())));
    }
    let ab = schedule.alpha_bar(t);
    Ok(&x0 * ab.sqrt() + &eps * (1.0 - ab).sqrt())
}

/// Same formula with an explicit ᾱ (used when the caller fixes ᾱ directly).
pub fn q_sample_with_alpha_bar(x0: ArrayView2<f64>, alpha_bar: f64, eps: ArrayView2<f64>) -> Array2<f64> {
    &x0 * alpha_bar.sqrt() + &eps * (1.0 - alpha_bar).sqrt()
}
