//! MSE and Fréchet distance between Gaussian fits of frame sets.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use thiserror::Error;

use crate::features::GestureFeatureSequence;
use crate::rotation::{matrix_to_euler_ordered, sixd_to_rot, Axis as RotAxis, RotationError};

pub const FGD_JITTER: f64 = 1e-6;
const SYMMETRY_TOL: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("matrix is not symmetric (max deviation {0:e})")]
    Asymmetric(f64),
    #[error(transparent)]
    Rotation(#[from] RotationError),
}

/// (1/n)·Σ_i ‖y_i − ŷ_i‖²_F.
pub fn mse(y: &[Array2<f64>], y_hat: &[Array2<f64>]) -> Result<f64, EvalError> {
    if y.len() != y_hat.len() || y.is_empty() {
        return Err(EvalError::Shape(format!("{} vs {} samples", y.len(), y_hat.len())));
    }
    let mut total = 0.0;
    for (a, b) in y.iter().zip(y_hat) {
        if a.dim() != b.dim() {
            return Err(EvalError::Shape(format!("{:?} vs {:?}", a.dim(), b.dim())));
        }
        total += a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
    }
    Ok(total / y.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: Array1<f64>,
    pub covariance: Array2<f64>,
    pub count: usize,
}

/// Sample mean and unbiased covariance of the rows of `x`.
pub fn gaussian_stats(x: ArrayView2<f64>) -> Result<GaussianSummary, EvalError> {
    let n = x.nrows();
    if n < 2 {
        return Err(EvalError::TooFewRows(n));
    }
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let centered = &x - &mean.view().insert_axis(Axis(0));
    let cov = centered.t().dot(&centered) / (n - 1) as f64;
    let covariance = (&cov + &cov.t()) * 0.5;
    Ok(GaussianSummary { mean, covariance, count: n })
}

fn to_nalgebra(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_nalgebra(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

fn check_symmetric(a: &Array2<f64>) -> Result<(), EvalError> {
    if a.nrows() != a.ncols() {
        return Err(EvalError::Shape(format!("{:?} is not square", a.dim())));
    }
    let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let dev = (a - &a.t()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if dev > SYMMETRY_TOL * scale {
        return Err(EvalError::Asymmetric(dev));
    }
    Ok(())
}

/// Principal square root of a symmetric PSD matrix; negative eigenvalues
/// (round-off) are clamped to zero.
pub fn sqrtm_psd(a: &Array2<f64>) -> Result<Array2<f64>, EvalError> {
    check_symmetric(a)?;
    let sym = (a + &a.t()) * 0.5;
    let eig = SymmetricEigen::new(to_nalgebra(&sym));
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let s = v * DMatrix::from_diagonal(&roots) * v.transpose();
    Ok(from_nalgebra(&s))
}

/// Tr √(√A·B·√A) computed as the nuclear norm of √A·√B. The two agree
/// exactly in real arithmetic; the singular values carry absolute rather than
/// square-rooted round-off.
fn cross_trace(root_a: &Array2<f64>, root_b: &Array2<f64>) -> f64 {
    to_nalgebra(&root_a.dot(root_b)).singular_values().iter().sum()
}

/// Fréchet distance between two Gaussian summaries:
/// ‖μ − μ̂‖² + Tr(Σ + Σ̂ − 2·√(√Σ·Σ̂·√Σ)).
pub fn frechet_distance(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64, EvalError> {
    let d = a.mean.len();
    if b.mean.len() != d {
        return Err(EvalError::Shape(format!("dimension {d} vs {}", b.mean.len())));
    }
    let jitter = Array2::<f64>::eye(d) * FGD_JITTER;
    let s1 = &a.covariance + &jitter;
    let s2 = &b.covariance + &jitter;
    let cross = cross_trace(&sqrtm_psd(&s1)?, &sqrtm_psd(&s2)?);
    let mean_term: f64 = (&a.mean - &b.mean).mapv(|v| v * v).sum();
    let value = mean_term + s1.diag().sum() + s2.diag().sum() - 2.0 * cross;
    Ok(value.max(0.0))
}

/// FGD between the row distributions of `real` and `generated`.
pub fn fgd(real: ArrayView2<f64>, generated: ArrayView2<f64>) -> Result<f64, EvalError> {
    if real.ncols() != generated.ncols() {
        return Err(EvalError::Shape(format!("dimension {} vs {}", real.ncols(), generated.ncols())));
    }
    frechet_distance(&gaussian_stats(real)?, &gaussian_stats(generated)?)
}

/// Per-joint ZYX Euler angles (radians) decoded from the 6D rotation
/// blocks; `frames × 3·joint_count`.
pub fn extract_rotation_features(features: &GestureFeatureSequence) -> Result<Array2<f64>, EvalError> {
    let layout = features.layout();
    let n = features.joint_count;
    let mut out = Array2::zeros((features.num_frames(), 3 * n));
    for (f, row) in features.data.rows().into_iter().enumerate() {
        for j in 0..n {
            let at = layout.r_joint(j);
            let mut v = [0.0; 6];
            for (k, slot) in v.iter_mut().enumerate() {
                *slot = row[at + k];
            }
            let r = sixd_to_rot(&v)?;
            let angles = matrix_to_euler_ordered(&r, [RotAxis::Z, RotAxis::Y, RotAxis::X]);
            for k in 0..3 {
                out[[f, 3 * j + k]] = angles[k];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal(rows: usize, cols: usize, shift: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || {
            let z: f64 = StandardNormal.sample(rng);
            z + shift
        })
    }

    #[test]
    fn mse_examples() {
        let a = vec![Array2::zeros((2, 3))];
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b[0][[1, 2]] = 3.0;
        assert_eq!(mse(&a, &b).unwrap(), 9.0);
        assert!(mse(&a, &[Array2::zeros((3, 2))]).is_err());
    }

    #[test]
    fn mse_matches_loop_and_scales_quadratically() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y: Vec<_> = (0..4).map(|_| normal(5, 3, 0.0, &mut rng)).collect();
        let yh: Vec<_> = (0..4).map(|_| normal(5, 3, 0.0, &mut rng)).collect();
        let mut brute = 0.0;
        for i in 0..4 {
            for r in 0..5 {
                for c in 0..3 {
                    brute += (y[i][[r, c]] - yh[i][[r, c]]).powi(2);
                }
            }
        }
        let m = mse(&y, &yh).unwrap();
        assert!((m - brute / 4.0).abs() < 1e-10);
        let k = 2.5;
        let ys: Vec<_> = y.iter().map(|a| a * k).collect();
        let yhs: Vec<_> = yh.iter().map(|a| a * k).collect();
        assert!((mse(&ys, &yhs).unwrap() - k * k * m).abs() < 1e-10);
    }

    #[test]
    fn gaussian_examples() {
        let x = Array2::from_shape_vec((2, 1), vec![0.0, 2.0]).unwrap();
        let g = gaussian_stats(x.view()).unwrap();
        assert_eq!(g.mean[0], 1.0);
        assert_eq!(g.covariance[[0, 0]], 2.0);
        let c = Array2::from_elem((5, 3), 4.0);
        assert!(gaussian_stats(c.view()).unwrap().covariance.iter().all(|&v| v == 0.0));
        assert_eq!(gaussian_stats(c.slice(ndarray::s![..1, ..])).unwrap_err(), EvalError::TooFewRows(1));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = normal(20, 4, 0.0, &mut rng);
        let cov = gaussian_stats(r.view()).unwrap().covariance;
        assert_eq!(cov, cov.t());
    }

    #[test]
    fn sqrtm_examples() {
        let i = Array2::<f64>::eye(3);
        let s = sqrtm_psd(&i).unwrap();
        assert!(s.iter().zip(i.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
        let d = Array2::from_shape_vec((2, 2), vec![4.0, 0.0, 0.0, 9.0]).unwrap();
        let s = sqrtm_psd(&d).unwrap();
        assert!((s[[0, 0]] - 2.0).abs() < 1e-12 && (s[[1, 1]] - 3.0).abs() < 1e-12 && s[[0, 1]].abs() < 1e-12);
        let bad = Array2::from_shape_vec((2, 2), vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(matches!(sqrtm_psd(&bad), Err(EvalError::Asymmetric(_))));
    }

    #[test]
    fn sqrtm_recovers_constructed_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = normal(6, 6, 0.0, &mut rng);
        let s0 = b.dot(&b.t()) + Array2::<f64>::eye(6) * 0.1;
        let a = s0.dot(&s0);
        let s = sqrtm_psd(&a).unwrap();
        let err = (&s - &s0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn fgd_one_dimensional_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = normal(100_000, 1, 0.0, &mut rng);
        let b = normal(100_000, 1, 1.0, &mut rng);
        let v = fgd(a.view(), b.view()).unwrap();
        assert!((v - 1.0).abs() <= 0.05, "{v}");
        assert!(fgd(a.view(), a.view()).unwrap() <= 1e-8);
        assert!((fgd(b.view(), a.view()).unwrap() - v).abs() <= 1e-8);
    }

    #[test]
    fn fgd_mean_term_is_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = normal(500, 2, 0.0, &mut rng);
        let b1 = &a + 0.7;
        let b2 = &a + 1.4;
        let f1 = fgd(a.view(), b1.view()).unwrap();
        let f2 = fgd(a.view(), b2.view()).unwrap();
        assert!((f2 - 4.0 * f1).abs() < 1e-6, "{f1} {f2}");
        assert!(fgd(a.view(), normal(10, 3, 0.0, &mut rng).view()).is_err());
    }

    #[test]
    fn fgd_symmetric_in_higher_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = normal(300, 5, 0.0, &mut rng);
        let b = normal(300, 5, 0.0, &mut rng).mapv(|v| v * rng.random_range(0.5..2.0));
        let ab = fgd(a.view(), b.view()).unwrap();
        let ba = fgd(b.view(), a.view()).unwrap();
        assert!((ab - ba).abs() <= 1e-8, "{ab} {ba}");
        assert!(ab >= 0.0);
    }

    #[test]
    fn self_distance_vanishes_for_wide_rank_deficient_sets() {
        // 300 rows in 400 dimensions with a few constant columns
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut x = normal(300, 400, 0.0, &mut rng) * 3.0;
        x.column_mut(7).fill(2.5);
        x.column_mut(100).fill(0.0);
        let d = fgd(x.view(), x.view()).unwrap();
        assert!(d <= 1e-8, "{d}");
    }
}
