//! Numerical self-tests runnable from the command line.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::diffusion::{guided_predict, q_sample_with_alpha_bar, ScheduleConfig};
use crate::eval::fgd;
use crate::nn::gradcheck::check_all;
use crate::nn::{set_attention_fault, Denoiser, ModelConfig};
use crate::rotation::{
    euler_to_quaternion, euler_zyx_to_matrix, mat_vec, max_abs_diff, quaternion_to_matrix, Quaternion, IDENTITY,
};

pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const ROTATION_TOLERANCE: f64 = 1e-9;
pub const ROTATION_SAMPLES: usize = 1000;
pub const DIFFUSION_DRAWS: usize = 100_000;
pub const FGD_DRAWS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, passed: value <= tolerance }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SelfCheckOptions {
    pub seed: u64,
    /// Flip the sign of the attention query gradient while checking.
    pub inject_attention_fault: bool,
}

pub fn gradient_checks(seed: u64) -> Vec<CheckResult> {
    check_all(seed)
        .into_iter()
        .map(|r| CheckResult::at_most(format!("grad/{}", r.name), r.max_rel_error, GRAD_TOLERANCE))
        .collect()
}

/// Quaternion path against matrix path over seeded ZYX triples, plus exact
/// identity cases.
pub fn rotation_checks(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_matrix, mut worst_vector) = (0.0f64, 0.0f64);
    let pi = std::f64::consts::PI;
    for _ in 0..ROTATION_SAMPLES {
        let (a, b, g) = (rng.random_range(-pi..pi), rng.random_range(-pi..pi), rng.random_range(-pi..pi));
        let m = euler_zyx_to_matrix(a, b, g);
        let q = euler_to_quaternion(a, b, g);
        let qm = quaternion_to_matrix(&q).expect("unit quaternion");
        worst_matrix = worst_matrix.max(max_abs_diff(&m, &qm));
        let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let (mv, qv) = (mat_vec(&m, &v), q.rotate(&v));
        worst_vector = worst_vector.max((0..3).map(|i| (mv[i] - qv[i]).abs()).fold(0.0, f64::max));
    }
    let identity_ok = euler_zyx_to_matrix(0.0, 0.0, 0.0) == IDENTITY
        && euler_to_quaternion(0.0, 0.0, 0.0) == Quaternion::IDENTITY
        && quaternion_to_matrix(&Quaternion::IDENTITY).ok() == Some(IDENTITY);
    vec![
        CheckResult::at_most("rotation/quat_vs_matrix", worst_matrix, ROTATION_TOLERANCE),
        CheckResult::at_most("rotation/rotate_vector", worst_vector, ROTATION_TOLERANCE),
        CheckResult::at_most("rotation/identity_exact", if identity_ok { 0.0 } else { 1.0 }, 0.0),
    ]
}

/// Relative errors of the empirical mean and variance of x_t at ᾱ = 0.5.
pub fn forward_diffusion_moments(seed: u64, draws: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0_value = 1.0;
    let x0 = Array2::from_elem((draws, 1), x0_value);
    let eps = Array2::from_shape_simple_fn((draws, 1), || rng.sample::<f64, _>(StandardNormal));
    let xt = q_sample_with_alpha_bar(x0.view(), 0.5, eps.view());
    let n = draws as f64;
    let mean = xt.sum() / n;
    let var = xt.mapv(|v| (v - mean) * (v - mean)).sum() / (n - 1.0);
    let target_mean = 0.5f64.sqrt() * x0_value;
    ((mean - target_mean).abs() / target_mean, (var - 0.5).abs() / 0.5)
}

pub fn schedule_checks(seed: u64) -> Vec<CheckResult> {
    let s = ScheduleConfig::default().build().expect("default schedule");
    let monotone = s.alpha_bar.windows(2).all(|w| w[1] < w[0]);
    let bounded = s.beta.iter().all(|&b| b > 0.0 && b < 1.0);
    let sigma_ok = s.sigma(1) == 0.0 && s.sigma.iter().all(|v| v.is_finite() && *v >= 0.0);
    let t_half = s.nearest_alpha_bar(0.5);
    let (mean_err, var_err) = forward_diffusion_moments(seed, DIFFUSION_DRAWS);
    vec![
        CheckResult::at_most("schedule/shape", if monotone && bounded && sigma_ok { 0.0 } else { 1.0 }, 0.0),
        CheckResult::at_most("schedule/alpha_bar_half_reachable", (s.alpha_bar(t_half) - 0.5).abs(), 0.01),
        CheckResult::at_most("diffusion/mean_rel_err", mean_err, 0.01),
        CheckResult::at_most("diffusion/var_rel_err", var_err, 0.01),
    ]
}

pub fn fgd_checks(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Array2::from_shape_simple_fn((FGD_DRAWS, 1), || rng.sample::<f64, _>(StandardNormal));
    let b = Array2::from_shape_simple_fn((FGD_DRAWS, 1), || 1.0 + rng.sample::<f64, _>(StandardNormal));
    let ab = fgd(a.view(), b.view()).unwrap_or(f64::NAN);
    let ba = fgd(b.view(), a.view()).unwrap_or(f64::NAN);
    let x = Array2::from_shape_simple_fn((500, 4), || rng.sample::<f64, _>(StandardNormal));
    let xx = fgd(x.view(), x.view()).unwrap_or(f64::NAN);
    vec![
        CheckResult::at_most("fgd/unit_shift", (ab - 1.0).abs(), 0.05),
        CheckResult::at_most("fgd/self", xx, 1e-8),
        CheckResult::at_most("fgd/symmetry", (ab - ba).abs(), 1e-8),
    ]
}

pub fn guidance_checks(seed: u64) -> Vec<CheckResult> {
    let c = ModelConfig::tiny();
    let model = Denoiser::new(c.clone(), seed).expect("tiny config");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = |r: usize, k: usize| Array2::from_shape_simple_fn((r, k), || rng.sample::<f64, _>(StandardNormal));
    let x = normal(c.frames, c.feature_dim);
    let c1 = crate::conditioning::ConditionBundle {
        seed: normal(c.seed_frames, c.feature_dim),
        emotion: crate::conditioning::Emotion::Happy.one_hot(),
        speech: normal(c.frames, c.speech_dim),
        text: normal(c.frames, c.text_dim),
        seed_mask: false,
        emotion_mask: false,
    };
    let c2 = c1.unconditional();
    let run = |g| guided_predict(&model, x.view(), 3, &c1, &c2, g).expect("valid inputs");
    let g1 = model.predict(x.view(), 3, &c1).expect("valid inputs");
    let g2 = model.predict(x.view(), 3, &c2).expect("valid inputs");
    let exact = run(1.0) == g1 && run(0.0) == g2;
    let half = (run(0.5) - (&g1 + &g2) * 0.5).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b));
    vec![
        CheckResult::at_most("guidance/endpoints_bitwise", if exact { 0.0 } else { 1.0 }, 0.0),
        CheckResult::at_most("guidance/midpoint", half, 1e-12),
    ]
}

pub fn run_selfcheck(options: SelfCheckOptions) -> Vec<CheckResult> {
    set_attention_fault(options.inject_attention_fault);
    let mut out = gradient_checks(options.seed);
    set_attention_fault(false);
    out.extend(rotation_checks(options.seed));
    out.extend(schedule_checks(options.seed));
    out.extend(fgd_checks(options.seed));
    out.extend(guidance_checks(options.seed));
    out
}

pub fn render_table(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
    let mut s = format!("{:<width$}  {:>12}  {:>10}  result\n", "check", "value", "tolerance");
    for r in results {
        s.push_str(&format!(
            "{:<width$}  {:>12.3e}  {:>10.1e}  {}\n",
            r.name,
            r.value,
            r.tolerance,
            if r.passed { "PASS" } else { "FAIL" }
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_build_passes_everything() {
        let results = run_selfcheck(SelfCheckOptions::default());
        let failed: Vec<_> = results.iter().filter(|r| !r.passed).collect();
        assert!(failed.is_empty(), "{}", render_table(&results));
        assert!(render_table(&results).contains("grad/denoiser_tiny"));
    }

    #[test]
    fn fault_injection_fails_attention_checks() {
        let results = run_selfcheck(SelfCheckOptions { seed: 0, inject_attention_fault: true });
        let failed: Vec<_> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
        assert!(failed.contains(&"grad/attention_masked"), "{failed:?}");
        assert!(failed.contains(&"grad/denoiser_tiny"), "{failed:?}");
    }
}
