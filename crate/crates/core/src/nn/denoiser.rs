//! The x0-predicting denoiser G(x_t, t, c).
//!
//! Data flow for a window of M frames:
//! ```text
//! T   = MLP(PE(t))                          hidden
//! z   = [Lin(e) ‖ Lin(vec s)] + T           hidden = hidden/4 + 3·hidden/4
//! m   = Lin([z ×M ‖ Lin(x_t) ‖ Lin(v) + Lin(a)])
//! h   = Lin(LocalAttn(m))                   banded |i−j| ≤ W, relative bias
//! out = Lin(Encoder([z; h])[1..])           pre-norm layers, relative bias
//! ```

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::AttentionCache;
use super::ffn::FeedForwardCache;
use super::layernorm::LayerNormCache;
use super::{
    cross_local_mask, join, silu, silu_grad, sinusoidal_pe, FeedForward, LayerNorm, Linear, MultiHeadAttention,
    NnError, Parameters,
};
use crate::conditioning::{ConditionBundle, EMOTION_COUNT};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub seed_frames: usize,
    pub frames: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub window: usize,
    pub speech_dim: usize,
    pub text_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            feature_dim: 1141,
            seed_frames: 8,
            frames: 80,
            hidden: 256,
            layers: 8,
            heads: 8,
            ffn_dim: 1024,
            window: 10,
            speech_dim: 1024,
            text_dim: 300,
        }
    }
}

impl ModelConfig {
    /// Smallest configuration used by gradient checks.
    pub fn tiny() -> Self {
        Self {
            feature_dim: 10,
            seed_frames: 2,
            frames: 6,
            hidden: 16,
            layers: 2,
            heads: 2,
            ffn_dim: 32,
            window: 2,
            speech_dim: 12,
            text_dim: 8,
        }
    }

    pub fn emotion_width(&self) -> usize {
        self.hidden / 4
    }

    pub fn seed_width(&self) -> usize {
        self.hidden - self.hidden / 4
    }

    /// Width of the frame-wise concatenation before the fusion projection.
    pub fn fusion_width(&self) -> usize {
        2 * self.hidden + self.hidden / 4
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let fail = |m: String| Err(NnError::Config(m));
        if self.hidden == 0 || self.hidden % 4 != 0 || self.hidden % 2 != 0 {
            return fail(format!("hidden {} must be a positive multiple of 4", self.hidden));
        }
        if self.heads == 0 || self.hidden % self.heads != 0 {
            return fail(format!("hidden {} not divisible by {} heads", self.hidden, self.heads));
        }
        if self.feature_dim == 0 || self.frames == 0 || self.seed_frames == 0 {
            return fail("feature_dim, frames and seed_frames must be positive".into());
        }
        if self.ffn_dim == 0 || self.speech_dim == 0 || self.text_dim == 0 {
            return fail("ffn_dim, speech_dim and text_dim must be positive".into());
        }
        Ok(())
    }
}

/// Pre-norm transformer layer: `x + Attn(LN(x))`, then `y + FFN(LN(y))`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub norm1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub ffn: FeedForward,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    ln1: LayerNormCache,
    attn: AttentionCache,
    ln2: LayerNormCache,
    ffn: FeedForwardCache,
}

impl EncoderLayer {
    pub fn new(width: usize, heads: usize, ffn_dim: usize, clip: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            norm1: LayerNorm::new(width),
            attn: MultiHeadAttention::new(width, heads, clip, rng),
            norm2: LayerNorm::new(width),
            ffn: FeedForward::new(width, ffn_dim, rng),
        }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, EncoderCache), NnError> {
        let (n1, ln1) = self.norm1.forward(x);
        let (a, attn) = self.attn.forward(n1.view(), None)?;
        let y = &x + &a;
        let (n2, ln2) = self.norm2.forward(y.view());
        let (f, ffn) = self.ffn.forward(n2.view());
        Ok((y + f, EncoderCache { ln1, attn, ln2, ffn }))
    }

    pub fn backward(&self, cache: &EncoderCache, dy: ArrayView2<f64>, grad: &mut EncoderLayer) -> Array2<f64> {
        let dn2 = self.ffn.backward(&cache.ffn, dy, &mut grad.ffn);
        let dmid = &dy + &self.norm2.backward(&cache.ln2, dn2.view(), &mut grad.norm2);
        let dn1 = self.attn.backward(&cache.attn, dmid.view(), &mut grad.attn);
        &dmid + &self.norm1.backward(&cache.ln1, dn1.view(), &mut grad.norm1)
    }
}

impl Parameters for EncoderLayer {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.norm1.visit(&join(prefix, "norm1"), f);
        self.attn.visit(&join(prefix, "attn"), f);
        self.norm2.visit(&join(prefix, "norm2"), f);
        self.ffn.visit(&join(prefix, "ffn"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.norm1.visit_mut(&join(prefix, "norm1"), f);
        self.attn.visit_mut(&join(prefix, "attn"), f);
        self.norm2.visit_mut(&join(prefix, "norm2"), f);
        self.ffn.visit_mut(&join(prefix, "ffn"), f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    pub config: ModelConfig,
    pub time_in: Linear,
    pub time_out: Linear,
    pub emotion_proj: Linear,
    pub seed_proj: Linear,
    pub input_proj: Linear,
    pub speech_proj: Linear,
    pub text_proj: Linear,
    pub fusion_proj: Linear,
    pub local_attn: MultiHeadAttention,
    pub local_out: Linear,
    pub layers: Vec<EncoderLayer>,
    pub final_norm: LayerNorm,
    pub output_proj: Linear,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct DenoiserCache {
    pe: Array1<f64>,
    time_pre: Array1<f64>,
    time_act: Array1<f64>,
    emotion_in: Array1<f64>,
    seed_in: Array1<f64>,
    x_t: Array2<f64>,
    speech: Array2<f64>,
    text: Array2<f64>,
    fused: Array2<f64>,
    local: AttentionCache,
    local_act: Array2<f64>,
    h: Array2<f64>,
    z: Array1<f64>,
    tokens: Array2<f64>,
    layers: Vec<EncoderCache>,
    final_ln: LayerNormCache,
    normed: Array2<f64>,
}

impl DenoiserCache {
    pub fn z(&self) -> &Array1<f64> {
        &self.z
    }

    /// `(M+1) × hidden` encoder input; row 0 is z.
    pub fn encoder_input(&self) -> &Array2<f64> {
        &self.tokens
    }

    /// Output of the cross-local block (`h`), before the encoder.
    pub fn local_output(&self) -> &Array2<f64> {
        &self.h
    }

    pub fn local_attention_probs(&self) -> &[Array2<f64>] {
        self.local.probs()
    }
}

impl Denoiser {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, NnError> {
        config.validate()?;
        let c = &config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = c.hidden;
        let time_in = Linear::new(h, h, &mut rng);
        let time_out = Linear::new(h, h, &mut rng);
        let emotion_proj = Linear::new(EMOTION_COUNT, c.emotion_width(), &mut rng);
        let seed_proj = Linear::new(c.seed_frames * c.feature_dim, c.seed_width(), &mut rng);
        let input_proj = Linear::new(c.feature_dim, h, &mut rng);
        let speech_proj = Linear::new(c.speech_dim, h / 4, &mut rng);
        let text_proj = Linear::new(c.text_dim, h / 4, &mut rng);
        let fusion_proj = Linear::new(c.fusion_width(), h, &mut rng);
        let local_attn = MultiHeadAttention::new(h, c.heads, c.window, &mut rng);
        let local_out = Linear::new(h, h, &mut rng);
        let layers = (0..c.layers).map(|_| EncoderLayer::new(h, c.heads, c.ffn_dim, c.frames, &mut rng)).collect();
        let final_norm = LayerNorm::new(h);
        let output_proj = Linear::new(h, c.feature_dim, &mut rng);
        Ok(Self {
            config,
            time_in,
            time_out,
            emotion_proj,
            seed_proj,
            input_proj,
            speech_proj,
            text_proj,
            fusion_proj,
            local_attn,
            local_out,
            layers,
            final_norm,
            output_proj,
        })
    }

    fn check_inputs(&self, x_t: ArrayView2<f64>, cond: &ConditionBundle) -> Result<(), NnError> {
        let c = &self.config;
        let shape = |m: String| Err(NnError::Shape(m));
        let m = x_t.nrows();
        if m == 0 || x_t.ncols() != c.feature_dim {
            return shape(format!("x_t is {:?}, expected (M, {})", x_t.dim(), c.feature_dim));
        }
        if cond.seed.dim() != (c.seed_frames, c.feature_dim) {
            return shape(format!("seed is {:?}, expected ({}, {})", cond.seed.dim(), c.seed_frames, c.feature_dim));
        }
        if cond.emotion.len() != EMOTION_COUNT {
            return shape(format!("emotion has {} entries", cond.emotion.len()));
        }
        if cond.speech.dim() != (m, c.speech_dim) {
            return shape(format!("speech is {:?}, expected ({m}, {})", cond.speech.dim(), c.speech_dim));
        }
        if cond.text.dim() != (m, c.text_dim) {
            return shape(format!("text is {:?}, expected ({m}, {})", cond.text.dim(), c.text_dim));
        }
        Ok(())
    }

    fn time_embedding(&self, t: usize) -> (Array1<f64>, Array1<f64>, Array1<f64>, Array1<f64>) {
        let pe = sinusoidal_pe(t as f64, self.config.hidden);
        let pre = self.time_in.forward_vec(pe.view());
        let act = pre.mapv(silu);
        let out = self.time_out.forward_vec(act.view());
        (pe, pre, act, out)
    }

    /// z_tk = [E ‖ S] + T, with masked inputs zeroed before projection.
    pub fn encode_condition(&self, cond: &ConditionBundle, t: usize) -> Result<Array1<f64>, NnError> {
        let c = &self.config;
        if cond.seed.dim() != (c.seed_frames, c.feature_dim) || cond.emotion.len() != EMOTION_COUNT {
            return Err(NnError::Shape(format!("seed {:?}, emotion {}", cond.seed.dim(), cond.emotion.len())));
        }
        let (_, _, _, time) = self.time_embedding(t);
        let (_, _, z) = self.condition_latent(cond, &time);
        Ok(z)
    }

    fn condition_latent(&self, cond: &ConditionBundle, time: &Array1<f64>) -> (Array1<f64>, Array1<f64>, Array1<f64>) {
        let emotion_in = cond.effective_emotion();
        let seed = cond.effective_seed();
        let seed_in = Array1::from_iter(seed.iter().copied());
        let e = self.emotion_proj.forward_vec(emotion_in.view());
        let s = self.seed_proj.forward_vec(seed_in.view());
        let z = concatenate![Axis(0), e, s] + time;
        (emotion_in, seed_in, z)
    }

    /// `M × fusion_width` concatenation [Z ‖ X ‖ V + A] (before projection).
    fn frame_concat(
        &self,
        x_t: ArrayView2<f64>,
        speech: ArrayView2<f64>,
        text: ArrayView2<f64>,
        z: &Array1<f64>,
    ) -> Array2<f64> {
        let h = self.config.hidden;
        let m = x_t.nrows();
        let mut fused = Array2::zeros((m, self.config.fusion_width()));
        fused.slice_mut(s![.., ..h]).assign(&z.broadcast((m, h)).expect("z width"));
        fused.slice_mut(s![.., h..2 * h]).assign(&self.input_proj.forward(x_t));
        let va = self.text_proj.forward(text) + self.speech_proj.forward(speech);
        fused.slice_mut(s![.., 2 * h..]).assign(&va);
        fused
    }

    /// m_t: projected frame-wise fusion of noisy motion, speech, text and z.
    pub fn fuse_frames(
        &self,
        x_t: ArrayView2<f64>,
        speech: ArrayView2<f64>,
        text: ArrayView2<f64>,
        z: &Array1<f64>,
    ) -> Result<Array2<f64>, NnError> {
        let c = &self.config;
        let m = x_t.nrows();
        if x_t.ncols() != c.feature_dim
            || speech.dim() != (m, c.speech_dim)
            || text.dim() != (m, c.text_dim)
            || z.len() != c.hidden
        {
            return Err(NnError::Shape(format!(
                "x_t {:?}, speech {:?}, text {:?}, z {}",
                x_t.dim(),
                speech.dim(),
                text.dim(),
                z.len()
            )));
        }
        Ok(self.fusion_proj.forward(self.frame_concat(x_t, speech, text, z).view()))
    }

    pub fn forward(
        &self,
        x_t: ArrayView2<f64>,
        t: usize,
        cond: &ConditionBundle,
    ) -> Result<(Array2<f64>, DenoiserCache), NnError> {
        self.check_inputs(x_t, cond)?;
        let m = x_t.nrows();
        let (pe, time_pre, time_act, time) = self.time_embedding(t);
        let (emotion_in, seed_in, z) = self.condition_latent(cond, &time);
        let fused = self.frame_concat(x_t, cond.speech.view(), cond.text.view(), &z);
        let mt = self.fusion_proj.forward(fused.view());
        let mask = cross_local_mask(m, self.config.window);
        let (local_act, local) = self.local_attn.forward(mt.view(), Some(mask.view()))?;
        let h = self.local_out.forward(local_act.view());

        let mut tokens = Array2::zeros((m + 1, self.config.hidden));
        tokens.row_mut(0).assign(&z);
        tokens.slice_mut(s![1.., ..]).assign(&h);
        let mut x = tokens.clone();
        let mut layer_caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, cache) = layer.forward(x.view())?;
            layer_caches.push(cache);
            x = y;
        }
        let (normed, final_ln) = self.final_norm.forward(x.view());
        let out = self.output_proj.forward(normed.slice(s![1.., ..]));
        let cache = DenoiserCache {
            pe,
            time_pre,
            time_act,
            emotion_in,
            seed_in,
            x_t: x_t.to_owned(),
            speech: cond.speech.clone(),
            text: cond.text.clone(),
            fused,
            local,
            local_act,
            h,
            z,
            tokens,
            layers: layer_caches,
            final_ln,
            normed,
        };
        Ok((out, cache))
    }

    pub fn predict(&self, x_t: ArrayView2<f64>, t: usize, cond: &ConditionBundle) -> Result<Array2<f64>, NnError> {
        Ok(self.forward(x_t, t, cond)?.0)
    }

    /// Accumulates dL/dθ into `grad` given dL/d(output).
    pub fn backward(&self, cache: &DenoiserCache, dout: ArrayView2<f64>, grad: &mut Denoiser) {
        let hd = self.config.hidden;
        let mut dnormed = Array2::zeros(cache.normed.raw_dim());
        let dframes = self.output_proj.backward(cache.normed.slice(s![1.., ..]), dout, &mut grad.output_proj);
        dnormed.slice_mut(s![1.., ..]).assign(&dframes);
        let mut dx = self.final_norm.backward(&cache.final_ln, dnormed.view(), &mut grad.final_norm);
        for ((layer, lc), lg) in self.layers.iter().zip(&cache.layers).zip(grad.layers.iter_mut()).rev() {
            dx = layer.backward(lc, dx.view(), lg);
        }
        let mut dz = dx.row(0).to_owned();
        let dh = dx.slice(s![1.., ..]);

        let dlocal = self.local_out.backward(cache.local_act.view(), dh, &mut grad.local_out);
        let dm = self.local_attn.backward(&cache.local, dlocal.view(), &mut grad.local_attn);
        let dfused = self.fusion_proj.backward(cache.fused.view(), dm.view(), &mut grad.fusion_proj);
        dz += &dfused.slice(s![.., ..hd]).sum_axis(Axis(0));
        self.input_proj.backward_params(cache.x_t.view(), dfused.slice(s![.., hd..2 * hd]), &mut grad.input_proj);
        let dva = dfused.slice(s![.., 2 * hd..]);
        self.speech_proj.backward_params(cache.speech.view(), dva, &mut grad.speech_proj);
        self.text_proj.backward_params(cache.text.view(), dva, &mut grad.text_proj);

        let ew = self.config.emotion_width();
        self.emotion_proj.backward_vec(cache.emotion_in.view(), dz.slice(s![..ew]), &mut grad.emotion_proj);
        self.seed_proj.backward_vec(cache.seed_in.view(), dz.slice(s![ew..]), &mut grad.seed_proj);
        let dact = self.time_out.backward_vec(cache.time_act.view(), dz.view(), &mut grad.time_out);
        let dpre = dact * &cache.time_pre.mapv(silu_grad);
        self.time_in.backward_vec(cache.pe.view(), dpre.view(), &mut grad.time_in);
    }
}

impl Parameters for Denoiser {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.time_in.visit(&join(prefix, "time_in"), f);
        self.time_out.visit(&join(prefix, "time_out"), f);
        self.emotion_proj.visit(&join(prefix, "emotion_proj"), f);
        self.seed_proj.visit(&join(prefix, "seed_proj"), f);
        self.input_proj.visit(&join(prefix, "input_proj"), f);
        self.speech_proj.visit(&join(prefix, "speech_proj"), f);
        self.text_proj.visit(&join(prefix, "text_proj"), f);
        self.fusion_proj.visit(&join(prefix, "fusion_proj"), f);
        self.local_attn.visit(&join(prefix, "local_attn"), f);
        self.local_out.visit(&join(prefix, "local_out"), f);
        for (i, layer) in self.layers.iter().enumerate() {
            layer.visit(&join(prefix, &format!("layers.{i}")), f);
        }
        self.final_norm.visit(&join(prefix, "final_norm"), f);
        self.output_proj.visit(&join(prefix, "output_proj"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.time_in.visit_mut(&join(prefix, "time_in"), f);
        self.time_out.visit_mut(&join(prefix, "time_out"), f);
        self.emotion_proj.visit_mut(&join(prefix, "emotion_proj"), f);
        self.seed_proj.visit_mut(&join(prefix, "seed_proj"), f);
        self.input_proj.visit_mut(&join(prefix, "input_proj"), f);
        self.speech_proj.visit_mut(&join(prefix, "speech_proj"), f);
        self.text_proj.visit_mut(&join(prefix, "text_proj"), f);
        self.fusion_proj.visit_mut(&join(prefix, "fusion_proj"), f);
        self.local_attn.visit_mut(&join(prefix, "local_attn"), f);
        self.local_out.visit_mut(&join(prefix, "local_out"), f);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_mut(&join(prefix, &format!("layers.{i}")), f);
        }
        self.final_norm.visit_mut(&join(prefix, "final_norm"), f);
        self.output_proj.visit_mut(&join(prefix, "output_proj"), f);
    }
}
