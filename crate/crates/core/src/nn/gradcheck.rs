//! Central-difference checks of every backward pass, usable outside tests.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    assign_flat, cross_local_mask, flatten, uniform_matrix, zeros_like, Denoiser, FeedForward, LayerNorm, Linear,
    ModelConfig, MultiHeadAttention, Parameters,
};
use crate::conditioning::{ConditionBundle, Emotion};

pub const FD_STEP: f64 = 1e-5;

/// Max relative error between an analytic gradient and central
/// differences of `loss` w.r.t. every entry of `flat`.
pub fn max_rel_error(flat: &mut [f64], analytic: &[f64], h: f64, mut loss: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..flat.len() {
        let orig = flat[i];
        flat[i] = orig + h;
        let lp = loss(flat);
        flat[i] = orig - h;
        let lm = loss(flat);
        flat[i] = orig;
        let numeric = (lp - lm) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub name: &'static str,
    /// Worst error over parameters and inputs.
    pub max_rel_error: f64,
    pub checked: usize,
}

fn perturb<P: Parameters>(p: &mut P, scale: f64, rng: &mut ChaCha8Rng) {
    p.visit_mut("", &mut |_, _, d| d.iter_mut().for_each(|v| *v += rng.random_range(-scale..scale)));
}

/// Error on parameters and on the input of a layer with loss Σ(y ⊙ w).
fn check_layer<P: Parameters + Clone>(
    name: &'static str,
    layer: &P,
    x: &Array2<f64>,
    forward: impl Fn(&P, &Array2<f64>) -> Array2<f64>,
    backward: impl Fn(&P, &Array2<f64>, &Array2<f64>, &mut P) -> Array2<f64>,
    w: &Array2<f64>,
) -> GradReport {
    let loss = |l: &P, x: &Array2<f64>| (forward(l, x) * w).sum();
    let mut g = zeros_like(layer);
    let dx = backward(layer, x, w, &mut g);
    let mut flat = flatten(layer);
    let mut probe = layer.clone();
    let e_param = max_rel_error(&mut flat, &flatten(&g), FD_STEP, |p| {
        assign_flat(&mut probe, p);
        loss(&probe, x)
    });
    let mut xf = x.iter().copied().collect::<Vec<_>>();
    let dim = x.raw_dim();
    let e_input = max_rel_error(&mut xf, &dx.iter().copied().collect::<Vec<_>>(), FD_STEP, |p| {
        loss(layer, &Array2::from_shape_vec(dim, p.to_vec()).expect("shape"))
    });
    GradReport { name, max_rel_error: e_param.max(e_input), checked: flat.len() + xf.len() }
}

pub fn check_linear(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lin = Linear::new(5, 4, &mut rng);
    perturb(&mut lin, 0.5, &mut rng);
    let x = uniform_matrix(3, 5, 1.0, &mut rng);
    let w = uniform_matrix(3, 4, 1.0, &mut rng);
    check_layer("linear", &lin, &x, |l, x| l.forward(x.view()), |l, x, dy, g| l.backward(x.view(), dy.view(), g), &w)
}

pub fn check_layernorm(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ln = LayerNorm::new(6);
    perturb(&mut ln, 0.5, &mut rng);
    let x = uniform_matrix(4, 6, 2.0, &mut rng);
    let w = uniform_matrix(4, 6, 1.0, &mut rng);
    check_layer(
        "layer_norm",
        &ln,
        &x,
        |l, x| l.forward(x.view()).0,
        |l, x, dy, g| l.backward(&l.forward(x.view()).1, dy.view(), g),
        &w,
    )
}

pub fn check_feedforward(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ffn = FeedForward::new(5, 12, &mut rng);
    perturb(&mut ffn, 0.2, &mut rng);
    let x = uniform_matrix(3, 5, 1.5, &mut rng);
    let w = uniform_matrix(3, 5, 1.0, &mut rng);
    check_layer(
        "feed_forward",
        &ffn,
        &x,
        |f, x| f.forward(x.view()).0,
        |f, x, dy, g| f.backward(&f.forward(x.view()).1, dy.view(), g),
        &w,
    )
}

/// Multi-head attention under a banded cross-local mask.
pub fn check_masked_attention(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attn = MultiHeadAttention::new(8, 2, 2, &mut rng);
    perturb(&mut attn, 0.2, &mut rng);
    let x = uniform_matrix(6, 8, 1.0, &mut rng);
    let w = uniform_matrix(6, 8, 1.0, &mut rng);
    let mask = cross_local_mask(6, 2);
    check_layer(
        "attention_masked",
        &attn,
        &x,
        |a, x| a.forward(x.view(), Some(mask.view())).expect("valid mask").0,
        |a, x, dy, g| a.backward(&a.forward(x.view(), Some(mask.view())).expect("valid mask").1, dy.view(), g),
        &w,
    )
}

/// Whole denoiser at the tiny config, MSE loss against a random target.
pub fn check_denoiser(seed: u64) -> GradReport {
    let c = ModelConfig::tiny();
    let mut d = Denoiser::new(c.clone(), seed).expect("tiny config is valid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    // biases and relative tables start at zero; perturb so every path is exercised
    perturb(&mut d, 0.1, &mut rng);
    let x = uniform_matrix(c.frames, c.feature_dim, 1.0, &mut rng);
    let cond = ConditionBundle {
        seed: uniform_matrix(c.seed_frames, c.feature_dim, 1.0, &mut rng),
        emotion: Emotion::Happy.one_hot(),
        speech: uniform_matrix(c.frames, c.speech_dim, 1.0, &mut rng),
        text: uniform_matrix(c.frames, c.text_dim, 1.0, &mut rng),
        seed_mask: false,
        emotion_mask: false,
    };
    let target = uniform_matrix(c.frames, c.feature_dim, 1.0, &mut rng);
    let n = target.len() as f64;
    let t = 9;
    let (out, cache) = d.forward(x.view(), t, &cond).expect("valid inputs");
    let dout = (out - &target) * (2.0 / n);
    let mut g = zeros_like(&d);
    d.backward(&cache, dout.view(), &mut g);
    let mut flat = flatten(&d);
    let mut probe = d.clone();
    let err = max_rel_error(&mut flat, &flatten(&g), FD_STEP, |p| {
        assign_flat(&mut probe, p);
        (probe.predict(x.view(), t, &cond).expect("valid inputs") - &target).mapv(|v| v * v).sum() / n
    });
    GradReport { name: "denoiser_tiny", max_rel_error: err, checked: flat.len() }
}

pub fn check_all(seed: u64) -> Vec<GradReport> {
    vec![
        check_linear(seed),
        check_layernorm(seed + 1),
        check_feedforward(seed + 2),
        check_masked_attention(seed + 3),
        check_denoiser(seed + 4),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::set_attention_fault;

    #[test]
    fn all_kernels_within_tolerance() {
        for r in check_all(40) {
            assert!(r.max_rel_error <= 1e-4, "{} {}", r.name, r.max_rel_error);
            assert!(r.checked > 0);
        }
    }

    #[test]
    fn injected_fault_is_caught() {
        set_attention_fault(true);
        let r = check_masked_attention(3);
        set_attention_fault(false);
        assert!(r.max_rel_error > 1e-2, "{}", r.max_rel_error);
    }
}
