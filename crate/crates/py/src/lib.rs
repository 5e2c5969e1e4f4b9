//! Python module `cogesture`. Matrices cross the boundary as lists of rows.

use std::path::{Path, PathBuf};

use cogesture::bvh::{parse_bvh, write_bvh, MotionClip, DEFAULT_PRECISION};
use cogesture::dataset::{synthesize_toy_corpus as synth, Dataset, ToyCorpusConfig};
use cogesture::features::{build_features, FeatureLayout};
use cogesture::rotation;
use cogesture::selfcheck::{run_selfcheck, SelfCheckOptions};
use cogesture_cli::commands::{self, Representation, SampleRequest};
use cogesture_cli::config::RunConfig;
use cogesture_cli::error::CliError;
use ndarray::Array2;
use pyo3::exceptions::{PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn cli_err(e: CliError) -> PyErr {
    match e {
        CliError::Input(m) => PyValueError::new_err(m),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect()).map_err(value_err)
}

fn config(path: Option<PathBuf>) -> PyResult<RunConfig> {
    RunConfig::load(path.as_deref()).map_err(cli_err)
}

/// A parsed BVH clip.
#[pyclass(name = "Motion", module = "cogesture")]
struct PyMotion {
    clip: MotionClip,
}

#[pymethods]
impl PyMotion {
    #[staticmethod]
    fn from_bvh(text: &str) -> PyResult<Self> {
        Ok(Self { clip: parse_bvh(text).map_err(value_err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| value_err(format!("{}: {e}", path.display())))?;
        Self::from_bvh(&text)
    }

    #[getter]
    fn num_frames(&self) -> usize {
        self.clip.num_frames()
    }

    #[getter]
    fn fps(&self) -> f64 {
        self.clip.fps()
    }

    #[getter]
    fn joint_names(&self) -> Vec<String> {
        self.clip.hierarchy.joints.iter().map(|j| j.name.clone()).collect()
    }

    /// Channel values, `frames × channels`, in file order.
    fn frames(&self) -> Vec<Vec<f64>> {
        rows(&self.clip.frames)
    }

    #[pyo3(signature = (precision = DEFAULT_PRECISION))]
    fn to_bvh(&self, precision: usize) -> String {
        write_bvh(&self.clip, precision)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        std::fs::write(path, write_bvh(&self.clip, DEFAULT_PRECISION)).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    /// Feature rows for the first `joint_count` joints (all joints by default).
    #[pyo3(signature = (joint_count = None))]
    fn features(&self, joint_count: Option<usize>) -> PyResult<Vec<Vec<f64>>> {
        let j = joint_count.unwrap_or(self.clip.hierarchy.len());
        Ok(rows(&build_features(&self.clip, j).map_err(value_err)?.data))
    }

    fn __repr__(&self) -> String {
        format!("Motion(joints={}, frames={}, fps={})", self.clip.hierarchy.len(), self.clip.num_frames(), self.clip.fps())
    }
}

/// Read-only view of a preprocessed dataset directory.
#[pyclass(name = "Dataset", module = "cogesture")]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: Dataset::open(&path).map_err(value_err)? })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.manifest.feature_dim
    }

    #[getter]
    fn clip_ids(&self) -> Vec<String> {
        self.inner.manifest.entries.iter().map(|e| e.clip_id.clone()).collect()
    }

    /// One training window as a dict of `x0`, `seed`, `speech`, `text`, `emotion`.
    fn window<'py>(&self, py: Python<'py>, index: usize) -> PyResult<Bound<'py, PyDict>> {
        if index >= self.inner.len() {
            return Err(PyIndexError::new_err(format!("window {index} of {}", self.inner.len())));
        }
        let ex = self.inner.load_window(index).map_err(value_err)?;
        let d = PyDict::new(py);
        d.set_item("x0", rows(&ex.x0))?;
        d.set_item("seed", rows(&ex.cond.seed))?;
        d.set_item("speech", rows(&ex.cond.speech))?;
        d.set_item("text", rows(&ex.cond.text))?;
        d.set_item("emotion", ex.cond.emotion.to_vec())?;
        Ok(d)
    }
}

#[pyfunction]
fn feature_width(joint_count: usize) -> usize {
    FeatureLayout::new(joint_count).width()
}

/// Intrinsic Z-Y-X Euler angles in radians to a rotation matrix.
#[pyfunction]
fn euler_zyx_to_matrix(alpha: f64, beta: f64, gamma: f64) -> [[f64; 3]; 3] {
    rotation::euler_zyx_to_matrix(alpha, beta, gamma)
}

#[pyfunction]
fn rot_to_6d(r: [[f64; 3]; 3]) -> [f64; 6] {
    rotation::rot_to_6d(&r)
}

#[pyfunction]
fn sixd_to_rot(v: [f64; 6]) -> PyResult<[[f64; 3]; 3]> {
    rotation::sixd_to_rot(&v).map_err(value_err)
}

/// Fréchet distance between the Gaussian fits of two row sets.
#[pyfunction]
fn fgd(real: Vec<Vec<f64>>, generated: Vec<Vec<f64>>) -> PyResult<f64> {
    let (a, b) = (matrix(real)?, matrix(generated)?);
    cogesture::eval::fgd(a.view(), b.view()).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (out, clips = 4, frames = 240, joints = 75, fps = 20.0, seed = 0))]
fn synthesize_toy_corpus(out: PathBuf, clips: usize, frames: usize, joints: usize, fps: f64, seed: u64) -> PyResult<Vec<String>> {
    synth(&out, &ToyCorpusConfig { clips, frames, joint_count: joints, fps, seed }).map_err(value_err)
}

/// Resolved run config as TOML text.
#[pyfunction]
#[pyo3(signature = (path = None))]
fn load_config(path: Option<PathBuf>) -> PyResult<String> {
    Ok(config(path)?.to_toml())
}

/// Ingests a corpus; returns the number of training windows.
#[pyfunction]
#[pyo3(signature = (corpus, out, config_path = None))]
fn preprocess(corpus: PathBuf, out: PathBuf, config_path: Option<PathBuf>) -> PyResult<usize> {
    let cfg = config(config_path)?;
    let (_, manifest) = commands::cmd_preprocess(&corpus, &out, &cfg).map_err(cli_err)?;
    Ok(manifest.window_count())
}

/// Trains and writes a checkpoint to `out`; returns the per-step losses.
#[pyfunction]
#[pyo3(signature = (data, out, config_path = None, steps = None, resume = None))]
fn train(
    py: Python<'_>,
    data: PathBuf,
    out: PathBuf,
    config_path: Option<PathBuf>,
    steps: Option<u64>,
    resume: Option<PathBuf>,
) -> PyResult<Vec<f64>> {
    let mut cfg = config(config_path)?;
    if let Some(s) = steps {
        cfg.training.steps = s;
    }
    let outcome = py.detach(|| commands::cmd_train(&data, &out, &cfg, resume.as_deref())).map_err(cli_err)?;
    Ok(outcome.stats.iter().map(|s| s.loss).collect())
}

/// Generates a BVH for a recording; returns the number of frames written.
#[pyfunction]
#[pyo3(signature = (checkpoint, wav, textgrid, emotion, out, emotion2 = None, gamma = None, seed = None))]
#[allow(clippy::too_many_arguments)]
fn sample(
    py: Python<'_>,
    checkpoint: PathBuf,
    wav: PathBuf,
    textgrid: PathBuf,
    emotion: &str,
    out: PathBuf,
    emotion2: Option<&str>,
    gamma: Option<f64>,
    seed: Option<u64>,
) -> PyResult<usize> {
    let req = SampleRequest {
        checkpoint,
        wav,
        textgrid,
        emotion: emotion.parse().map_err(value_err)?,
        emotion2: emotion2.map(str::parse).transpose().map_err(value_err)?,
        gamma,
        seed,
        mode: None,
        out,
        allow_untrained: false,
    };
    let side = py.detach(|| commands::cmd_sample(&req)).map_err(cli_err)?;
    Ok(side.frames)
}

/// Metric name to value, e.g. `{"fgd": 1.3}` or with `paired`, `{"fgd": .., "mse": ..}`.
#[pyfunction]
#[pyo3(signature = (real, generated, representation = "features", paired = false))]
fn evaluate<'py>(
    py: Python<'py>,
    real: PathBuf,
    generated: PathBuf,
    representation: &str,
    paired: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let rep = match representation {
        "features" => Representation::Features,
        "rotations" => Representation::Rotations,
        other => return Err(PyValueError::new_err(format!("unknown representation {other:?}"))),
    };
    let report = commands::cmd_eval(Path::new(&real), &generated, rep, paired, &RunConfig::default()).map_err(cli_err)?;
    let d = PyDict::new(py);
    for m in report.metrics {
        d.set_item(m.metric, m.value)?;
    }
    Ok(d)
}

/// `(name, value, tolerance, passed)` for every numerical self-check.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn selfcheck(py: Python<'_>, seed: u64) -> Vec<(String, f64, f64, bool)> {
    py.detach(|| run_selfcheck(SelfCheckOptions { seed, inject_attention_fault: false }))
        .into_iter()
        .map(|r| (r.name, r.value, r.tolerance, r.passed))
        .collect()
}

#[pymodule]
#[pyo3(name = "cogesture")]
fn cogesture_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMotion>()?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(feature_width, m)?)?;
    m.add_function(wrap_pyfunction!(euler_zyx_to_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(rot_to_6d, m)?)?;
    m.add_function(wrap_pyfunction!(sixd_to_rot, m)?)?;
    m.add_function(wrap_pyfunction!(fgd, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_toy_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(load_config, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(selfcheck, m)?)?;
    Ok(())
}
