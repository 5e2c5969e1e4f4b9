//! Layers with hand-written backward passes, and the denoiser built from them.
//!
//! Every layer stores its weights in standard-layout `f64` arrays and
//! implements [`Parameters`], which gives stable dotted names to each tensor.
//! Gradients are accumulated into a value of the same type as the layer.

pub mod attention;
pub mod denoiser;
pub mod ffn;
pub mod gradcheck;
pub mod layernorm;
pub mod linear;

use ndarray::{Array1, Array2};
use rand::Rng;
use thiserror::Error;

pub use attention::{
    attention_kernel, attention_kernel_backward, cross_local_mask, set_attention_fault, sinusoidal_pe, MultiHeadAttention,
};
pub use denoiser::{Denoiser, DenoiserCache, EncoderLayer, ModelConfig};
pub use ffn::FeedForward;
pub use layernorm::LayerNorm;
pub use linear::Linear;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("attention row {0} is fully masked")]
    FullyMaskedRow(usize),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("timestep {0} out of range")]
    Timestep(usize),
}

/// Named tensor traversal. Names are `prefix.field` paths; order is fixed
/// and identical between `visit` and `visit_mut`.
pub trait Parameters {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64]));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64]));
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub(crate) fn visit1(prefix: &str, name: &str, a: &Array1<f64>, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
    f(&join(prefix, name), &[a.len()], a.as_slice().expect("standard layout"));
}

pub(crate) fn visit1_mut(
    prefix: &str,
    name: &str,
    a: &mut Array1<f64>,
    f: &mut dyn FnMut(&str, &[usize], &mut [f64]),
) {
    let shape = [a.len()];
    f(&join(prefix, name), &shape, a.as_slice_mut().expect("standard layout"));
}

pub(crate) fn visit2(prefix: &str, name: &str, a: &Array2<f64>, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
    f(&join(prefix, name), &[a.nrows(), a.ncols()], a.as_slice().expect("standard layout"));
}

pub(crate) fn visit2_mut(
    prefix: &str,
    name: &str,
    a: &mut Array2<f64>,
    f: &mut dyn FnMut(&str, &[usize], &mut [f64]),
) {
    let shape = [a.nrows(), a.ncols()];
    f(&join(prefix, name), &shape, a.as_slice_mut().expect("standard layout"));
}

pub fn param_count<P: Parameters + ?Sized>(p: &P) -> usize {
    let mut n = 0;
    p.visit("", &mut |_, _, d| n += d.len());
    n
}

pub fn flatten<P: Parameters + ?Sized>(p: &P) -> Vec<f64> {
    let mut out = Vec::with_capacity(param_count(p));
    p.visit("", &mut |_, _, d| out.extend_from_slice(d));
    out
}

/// Overwrites every tensor from `flat` (in visit order).
pub fn assign_flat<P: Parameters + ?Sized>(p: &mut P, flat: &[f64]) {
    let mut offset = 0;
    p.visit_mut("", &mut |_, _, d| {
        d.copy_from_slice(&flat[offset..offset + d.len()]);
        offset += d.len();
    });
    assert_eq!(offset, flat.len(), "flat parameter length mismatch");
}

pub fn zeros_like<P: Parameters + Clone>(p: &P) -> P {
    let mut z = p.clone();
    z.visit_mut("", &mut |_, _, d| d.fill(0.0));
    z
}

/// `(name, shape)` of every tensor in visit order.
pub fn tensor_specs<P: Parameters + ?Sized>(p: &P) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    p.visit("", &mut |n, s, _| out.push((n.to_string(), s.to_vec())));
    out
}

/// L2 norm over all tensors.
pub fn global_norm<P: Parameters + ?Sized>(p: &P) -> f64 {
    let mut s = 0.0;
    p.visit("", &mut |_, _, d| s += d.iter().map(|v| v * v).sum::<f64>());
    s.sqrt()
}

pub(crate) fn uniform_matrix(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
}

pub(crate) fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

pub(crate) fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}
