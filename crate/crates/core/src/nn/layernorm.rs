use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{visit1, visit1_mut, Parameters};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Row-wise layer normalization with learned gain and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Array1<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(width: usize) -> Self {
        Self { gain: Array1::ones(width), bias: Array1::zeros(width) }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, LayerNormCache) {
        let n = x.ncols() as f64;
        let mut xhat = x.to_owned();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() / n;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|v| v * v).sum::<f64>() / n;
            *inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row *= *inv;
        }
        let y = &xhat * &self.gain + &self.bias;
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: ArrayView2<f64>, grad: &mut LayerNorm) -> Array2<f64> {
        grad.gain += &(&dy * &cache.xhat).sum_axis(Axis(0));
        grad.bias += &dy.sum_axis(Axis(0));
        let n = dy.ncols() as f64;
        let dxhat = &dy * &self.gain;
        let mut dx = Array2::zeros(dy.raw_dim());
        for (((mut out, g), xh), &inv) in
            dx.rows_mut().into_iter().zip(dxhat.rows()).zip(cache.xhat.rows()).zip(cache.inv_std.iter())
        {
            let sum_g = g.sum();
            let sum_gx = g.dot(&xh);
            for ((o, &gi), &xi) in out.iter_mut().zip(g.iter()).zip(xh.iter()) {
                *o = inv / n * (n * gi - sum_g - xi * sum_gx);
            }
        }
        dx
    }
}

impl Parameters for LayerNorm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        visit1(prefix, "gain", &self.gain, f);
        visit1(prefix, "bias", &self.bias, f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        visit1_mut(prefix, "gain", &mut self.gain, f);
        visit1_mut(prefix, "bias", &mut self.bias, f);
    }
}
