use std::cell::Cell;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{visit2, visit2_mut, Linear, NnError, Parameters};

thread_local! {
    static FLIP_QUERY_GRAD: Cell<bool> = const { Cell::new(false) };
}

/// Flips the sign of dL/dQ in [`attention_kernel_backward`] on the current
/// thread. Used to prove that the gradient self-check can fail.
#[doc(hidden)]
pub fn set_attention_fault(enabled: bool) {
    FLIP_QUERY_GRAD.with(|c| c.set(enabled));
}

/// Additive band mask: 0 where |i − j| ≤ w, −∞ elsewhere.
pub fn cross_local_mask(m: usize, w: usize) -> Array2<f64> {
    Array2::from_shape_fn((m, m), |(i, j)| if i.abs_diff(j) <= w { 0.0 } else { f64::NEG_INFINITY })
}

/// Interleaved sin/cos encoding of `t` with base 10000.
pub fn sinusoidal_pe(t: f64, d: usize) -> Array1<f64> {
    let mut pe = Array1::zeros(d);
    for i in 0..d / 2 {
        let freq = 10000f64.powf(-2.0 * i as f64 / d as f64);
        pe[2 * i] = (t * freq).sin();
        pe[2 * i + 1] = (t * freq).cos();
    }
    pe
}

fn softmax_rows(logits: &mut Array2<f64>) -> Result<(), NnError> {
    for (i, mut row) in logits.rows_mut().into_iter().enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(NnError::FullyMaskedRow(i));
        }
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    Ok(())
}

/// Single-head scaled dot-product attention
/// `softmax(Q·Kᵀ/√C + bias + mask)·V`. Returns the output and the
/// attention probabilities.
pub fn attention_kernel(
    q: ArrayView2<f64>,
    k: ArrayView2<f64>,
    v: ArrayView2<f64>,
    mask: Option<ArrayView2<f64>>,
    bias: Option<ArrayView2<f64>>,
) -> Result<(Array2<f64>, Array2<f64>), NnError> {
    if q.ncols() != k.ncols() || k.nrows() != v.nrows() {
        return Err(NnError::Shape(format!("q {:?}, k {:?}, v {:?}", q.dim(), k.dim(), v.dim())));
    }
    let scale = 1.0 / (q.ncols() as f64).sqrt();
    let mut logits = q.dot(&k.t()) * scale;
    if let Some(b) = bias {
        logits += &b;
    }
    if let Some(m) = mask {
        if m.dim() != logits.dim() {
            return Err(NnError::Shape(format!("mask {:?} for logits {:?}", m.dim(), logits.dim())));
        }
        logits += &m;
    }
    softmax_rows(&mut logits)?;
    Ok((logits.dot(&v), logits))
}

/// Gradients of [`attention_kernel`]: `(dQ, dK, dV, dLogits)`, where
/// dLogits is the gradient w.r.t. the pre-softmax logits (and therefore
/// w.r.t. any additive bias).
pub fn attention_kernel_backward(
    q: ArrayView2<f64>,
    k: ArrayView2<f64>,
    v: ArrayView2<f64>,
    probs: ArrayView2<f64>,
    dout: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
    let scale = 1.0 / (q.ncols() as f64).sqrt();
    let dv = probs.t().dot(&dout);
    let dp = dout.dot(&v.t());
    let row_dot = (&dp * &probs).sum_axis(Axis(1)).insert_axis(Axis(1));
    let dlogits = &probs * &(dp - &row_dot);
    let mut dq = dlogits.dot(&k) * scale;
    let dk = dlogits.t().dot(&q) * scale;
    if FLIP_QUERY_GRAD.with(|c| c.get()) {
        dq.mapv_inplace(|x| -x);
    }
    (dq, dk, dv, dlogits)
}

/// Multi-head self-attention with a learned relative-position bias per head,
/// indexed by the offset j − i clipped to ±`clip`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub clip: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    /// heads × (2·clip + 1)
    pub rel_bias: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    concat: Array2<f64>,
}

impl AttentionCache {
    pub fn probs(&self) -> &[Array2<f64>] {
        &self.probs
    }
}

impl MultiHeadAttention {
    pub fn new(width: usize, heads: usize, clip: usize, rng: &mut impl Rng) -> Self {
        assert!(heads > 0 && width % heads == 0, "width {width} not divisible by {heads} heads");
        Self {
            heads,
            clip,
            query: Linear::new(width, width, rng),
            key: Linear::new(width, width, rng),
            value: Linear::new(width, width, rng),
            output: Linear::new(width, width, rng),
            rel_bias: Array2::zeros((heads, 2 * clip + 1)),
        }
    }

    fn offset_index(&self, i: usize, j: usize) -> usize {
        let c = self.clip as isize;
        ((j as isize - i as isize).clamp(-c, c) + c) as usize
    }

    fn bias_matrix(&self, head: usize, len: usize) -> Array2<f64> {
        Array2::from_shape_fn((len, len), |(i, j)| self.rel_bias[[head, self.offset_index(i, j)]])
    }

    pub fn forward(
        &self,
        x: ArrayView2<f64>,
        mask: Option<ArrayView2<f64>>,
    ) -> Result<(Array2<f64>, AttentionCache), NnError> {
        let len = x.nrows();
        let hw = x.ncols() / self.heads;
        let q = self.query.forward(x);
        let k = self.key.forward(x);
        let v = self.value.forward(x);
        let mut concat = Array2::zeros((len, x.ncols()));
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * hw..(h + 1) * hw];
            let bias = self.bias_matrix(h, len);
            let (out, p) = attention_kernel(q.slice(cols), k.slice(cols), v.slice(cols), mask, Some(bias.view()))?;
            concat.slice_mut(cols).assign(&out);
            probs.push(p);
        }
        let y = self.output.forward(concat.view());
        Ok((y, AttentionCache { x: x.to_owned(), q, k, v, probs, concat }))
    }

    pub fn backward(&self, cache: &AttentionCache, dy: ArrayView2<f64>, grad: &mut MultiHeadAttention) -> Array2<f64> {
        let len = cache.x.nrows();
        let hw = cache.x.ncols() / self.heads;
        let dconcat = self.output.backward(cache.concat.view(), dy, &mut grad.output);
        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dk = Array2::zeros(cache.k.raw_dim());
        let mut dv = Array2::zeros(cache.v.raw_dim());
        for h in 0..self.heads {
            let cols = s![.., h * hw..(h + 1) * hw];
            let (gq, gk, gv, glogits) = attention_kernel_backward(
                cache.q.slice(cols),
                cache.k.slice(cols),
                cache.v.slice(cols),
                cache.probs[h].view(),
                dconcat.slice(cols),
            );
            dq.slice_mut(cols).assign(&gq);
            dk.slice_mut(cols).assign(&gk);
            dv.slice_mut(cols).assign(&gv);
            for i in 0..len {
                for j in 0..len {
                    grad.rel_bias[[h, self.offset_index(i, j)]] += glogits[[i, j]];
                }
            }
        }
        let mut dx = self.query.backward(cache.x.view(), dq.view(), &mut grad.query);
        dx += &self.key.backward(cache.x.view(), dk.view(), &mut grad.key);
        dx += &self.value.backward(cache.x.view(), dv.view(), &mut grad.value);
        dx
    }
}

impl Parameters for MultiHeadAttention {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.query.visit(&super::join(prefix, "query"), f);
        self.key.visit(&super::join(prefix, "key"), f);
        self.value.visit(&super::join(prefix, "value"), f);
        self.output.visit(&super::join(prefix, "output"), f);
        visit2(prefix, "rel_bias", &self.rel_bias, f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.query.visit_mut(&super::join(prefix, "query"), f);
        self.key.visit_mut(&super::join(prefix, "key"), f);
        self.value.visit_mut(&super::join(prefix, "value"), f);
        self.output.visit_mut(&super::join(prefix, "output"), f);
        visit2_mut(prefix, "rel_bias", &mut self.rel_bias, f);
    }
}
