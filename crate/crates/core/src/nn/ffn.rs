use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::{silu, silu_grad, Linear, Parameters};

/// Two-layer MLP with SiLU between the projections.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

#[derive(Debug, Clone)]
pub struct FeedForwardCache {
    x: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
}

impl FeedForward {
    pub fn new(width: usize, inner: usize, rng: &mut impl Rng) -> Self {
        Self { up: Linear::new(width, inner, rng), down: Linear::new(inner, width, rng) }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, FeedForwardCache) {
        let pre = self.up.forward(x);
        let act = pre.mapv(silu);
        let y = self.down.forward(act.view());
        (y, FeedForwardCache { x: x.to_owned(), pre, act })
    }

    pub fn backward(&self, cache: &FeedForwardCache, dy: ArrayView2<f64>, grad: &mut FeedForward) -> Array2<f64> {
        let dact = self.down.backward(cache.act.view(), dy, &mut grad.down);
        let dpre = dact * &cache.pre.mapv(silu_grad);
        self.up.backward(cache.x.view(), dpre.view(), &mut grad.up)
    }
}

impl Parameters for FeedForward {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.up.visit(&super::join(prefix, "up"), f);
        self.down.visit(&super::join(prefix, "down"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.up.visit_mut(&super::join(prefix, "up"), f);
        self.down.visit_mut(&super::join(prefix, "down"), f);
    }
}
