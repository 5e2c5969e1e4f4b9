use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::{uniform_matrix, visit1, visit1_mut, visit2, visit2_mut, Parameters};

/// `y = x·W + b` with `W` stored as `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    /// Weights uniform in ±1/√fan_in, zero bias.
    pub fn new(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        Self { weight: uniform_matrix(input, output, bound, rng), bias: Array1::zeros(output) }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self { weight: Array2::zeros((input, output)), bias: Array1::zeros(output) }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    pub fn forward_vec(&self, x: ArrayView1<f64>) -> Array1<f64> {
        x.dot(&self.weight) + &self.bias
    }

    /// Accumulates parameter gradients into `grad` and returns dL/dx.
    pub fn backward(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>, grad: &mut Linear) -> Array2<f64> {
        self.backward_params(x, dy, grad);
        dy.dot(&self.weight.t())
    }

    pub fn backward_params(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>, grad: &mut Linear) {
        grad.weight += &x.t().dot(&dy);
        grad.bias += &dy.sum_axis(Axis(0));
    }

    pub fn backward_vec(&self, x: ArrayView1<f64>, dy: ArrayView1<f64>, grad: &mut Linear) -> Array1<f64> {
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                grad.weight.row_mut(i).scaled_add(xi, &dy);
            }
        }
        grad.bias += &dy;
        self.weight.dot(&dy)
    }
}

impl Parameters for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        visit2(prefix, "weight", &self.weight, f);
        visit1(prefix, "bias", &self.bias, f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        visit2_mut(prefix, "weight", &mut self.weight, f);
        visit1_mut(prefix, "bias", &mut self.bias, f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::max_rel_error;
    use crate::nn::{assign_flat, flatten, zeros_like};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut lin = Linear::new(5, 4, &mut rng);
        lin.bias.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        let x = uniform_matrix(3, 5, 1.0, &mut rng);
        let target = uniform_matrix(3, 4, 1.0, &mut rng);
        let loss = |l: &Linear, x: &Array2<f64>| (l.forward(x.view()) - &target).mapv(|v| v * v).sum() * 0.5;

        let mut g = zeros_like(&lin);
        let dy = lin.forward(x.view()) - &target;
        let dx = lin.backward(x.view(), dy.view(), &mut g);

        let mut flat = flatten(&lin);
        let err = max_rel_error(&mut flat, &flatten(&g), 1e-5, |p| {
            let mut l = lin.clone();
            assign_flat(&mut l, p);
            loss(&l, &x)
        });
        assert!(err < 1e-6, "param rel err {err}");

        let mut xf = x.as_slice().unwrap().to_vec();
        let err = max_rel_error(&mut xf, dx.as_slice().unwrap(), 1e-5, |p| {
            loss(&lin, &Array2::from_shape_vec((3, 5), p.to_vec()).unwrap())
        });
        assert!(err < 1e-6, "input rel err {err}");
    }

    #[test]
    fn vector_path_matches_matrix_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lin = Linear::new(4, 3, &mut rng);
        let x = uniform_matrix(1, 4, 1.0, &mut rng);
        let dy = uniform_matrix(1, 3, 1.0, &mut rng);
        for (a, b) in lin.forward(x.view()).row(0).iter().zip(lin.forward_vec(x.row(0)).iter()) {
            assert!((a - b).abs() < 1e-14);
        }
        let (mut g1, mut g2) = (zeros_like(&lin), zeros_like(&lin));
        let dx1 = lin.backward(x.view(), dy.view(), &mut g1);
        let dx2 = lin.backward_vec(x.row(0), dy.row(0), &mut g2);
        for (a, b) in dx1.iter().zip(dx2.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in flatten(&g1).iter().zip(flatten(&g2).iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
