//! Python bindings: front end, graphs and losses, trained models and the
//! experiment pipeline. Matrices cross the boundary as lists of rows.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use fdcae_core::config::RunConfig;
use fdcae_core::corpus::PhoneInventory;
use fdcae_core::eval::{self, Pipeline as CorePipeline};
use fdcae_core::fdcae::{total_loss, FdcaeModel, DEFAULT_ALPHA, DEFAULT_BETA};
use fdcae_core::graph::{forward_backward, lfmmi_objective, viterbi_best_path, StateGraph};
use fdcae_core::{pitch, signal, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_array(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

fn waveform(samples: Vec<f64>, sample_rate: u32) -> PyResult<signal::Waveform> {
    signal::Waveform::new(samples, sample_rate).map_err(py_err)
}

/// MFCC matrix (frames x 40) with the default front-end settings.
#[pyfunction]
fn mfcc(samples: Vec<f64>, sample_rate: u32) -> PyResult<Vec<Vec<f64>>> {
    let w = waveform(samples, sample_rate)?;
    let f = signal::extract_mfcc(&w, &signal::MfccConfig::default()).map_err(py_err)?;
    Ok(to_rows(&f.frames))
}

/// Per-frame `(f0, nccf, voiced)`; f0 is 0 on unvoiced frames.
#[pyfunction]
fn track_pitch(samples: Vec<f64>, sample_rate: u32) -> PyResult<Vec<(f64, f64, bool)>> {
    let w = waveform(samples, sample_rate)?;
    Ok(pitch::track_pitch(&w).frames.iter().map(|f| (f.f0, f.nccf, f.voiced)).collect())
}

/// Duration-preserving pitch shift.
#[pyfunction]
fn pitch_shift(samples: Vec<f64>, sample_rate: u32, cents: i32) -> PyResult<Vec<f64>> {
    let w = waveform(samples, sample_rate)?;
    Ok(pitch::pitch_shift_cents(&w, cents).samples)
}

#[pyfunction]
fn phone_error_rate(hyp: Vec<String>, reference: Vec<String>) -> PyResult<f64> {
    eval::phone_error_rate(&hyp, &reference).map_err(py_err)
}

/// Phone symbols of the default inventory; index 0 is silence.
#[pyfunction]
fn phones() -> Vec<String> {
    PhoneInventory::default().symbols().to_vec()
}

#[pyfunction]
#[pyo3(signature = (f_ce, f_lfmmi, f_mse, alpha = DEFAULT_ALPHA, beta = DEFAULT_BETA))]
fn joint_loss(f_ce: f64, f_lfmmi: f64, f_mse: f64, alpha: f64, beta: f64) -> f64 {
    total_loss(f_ce, f_lfmmi, f_mse, alpha, beta, 0).total
}

/// Weighted acceptor over HMM states, built from the text arc-list format.
#[pyclass]
struct Graph {
    inner: StateGraph,
}

#[pymethods]
impl Graph {
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: StateGraph::from_text(text).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: StateGraph::read(path).map_err(py_err)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.inner.num_states
    }

    /// `(log_total, posteriors)` for a frames x states log-likelihood matrix.
    fn forward_backward(&self, loglik: Vec<Vec<f64>>) -> PyResult<(f64, Vec<Vec<f64>>)> {
        let r = forward_backward(&self.inner, to_array(loglik)?.view()).map_err(py_err)?;
        Ok((r.log_total, to_rows(&r.posteriors)))
    }

    /// `(score, states)` of the best path.
    fn best_path(&self, loglik: Vec<Vec<f64>>) -> PyResult<(f64, Vec<usize>)> {
        let r = viterbi_best_path(&self.inner, to_array(loglik)?.view()).map_err(py_err)?;
        Ok((r.score, r.states))
    }
}

/// LF-MMI value and its gradient with respect to the log-likelihoods.
#[pyfunction]
fn lfmmi(num: &Graph, den: &Graph, loglik: Vec<Vec<f64>>) -> PyResult<(f64, Vec<Vec<f64>>)> {
    let r = lfmmi_objective(&num.inner, &den.inner, to_array(loglik)?.view()).map_err(py_err)?;
    Ok((r.value, to_rows(&r.grad)))
}

/// A trained acoustic model loaded from its checkpoints.
#[pyclass]
struct Model {
    inner: FdcaeModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    #[pyo3(signature = (encoder_path, decoder_path = None))]
    fn load(encoder_path: PathBuf, decoder_path: Option<PathBuf>) -> PyResult<Self> {
        Ok(Self {
            inner: FdcaeModel::load(encoder_path, decoder_path.as_deref()).map_err(py_err)?,
        })
    }

    #[getter]
    fn condition(&self) -> String {
        self.inner.condition.to_string()
    }

    #[getter]
    fn aux_mode(&self) -> String {
        self.inner.aux_mode().to_string()
    }

    #[getter]
    fn aux_dim(&self) -> usize {
        self.inner.encoder.aux_dim
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    #[getter]
    fn has_decoder(&self) -> bool {
        self.inner.decoder.is_some()
    }

    /// Phoneme-state logits (frames x states) in inference mode.
    #[pyo3(signature = (feats, aux = None))]
    fn logits(&self, feats: Vec<Vec<f64>>, aux: Option<Vec<Vec<f64>>>) -> PyResult<Vec<Vec<f64>>> {
        let aux = aux.map(to_array).transpose()?;
        let out = self.inner.logits(to_array(feats)?.view(), aux.as_ref()).map_err(py_err)?;
        Ok(to_rows(&out))
    }

    /// Decoder reconstruction of the features; f-DcAE models only.
    #[pyo3(signature = (feats, aux = None))]
    fn reconstruct(&self, feats: Vec<Vec<f64>>, aux: Option<Vec<Vec<f64>>>) -> PyResult<Vec<Vec<f64>>> {
        let aux = aux.map(to_array).transpose()?;
        let out = self.inner.reconstruct(to_array(feats)?.view(), aux.as_ref()).map_err(py_err)?;
        Ok(to_rows(&out))
    }
}

/// Experiment pipeline rooted at an output directory.
#[pyclass]
struct Pipeline {
    inner: CorePipeline,
}

#[pymethods]
impl Pipeline {
    #[new]
    #[pyo3(signature = (out, config_toml = None))]
    fn new(out: PathBuf, config_toml: Option<&str>) -> PyResult<Self> {
        let cfg = match config_toml {
            Some(t) => RunConfig::from_toml(t).map_err(py_err)?,
            None => RunConfig::default(),
        };
        Ok(Self {
            inner: CorePipeline::new(cfg, out),
        })
    }

    fn config_toml(&self) -> String {
        self.inner.cfg.to_toml()
    }

    /// Runs every data preparation stage.
    fn prepare(&self, py: Python<'_>) -> PyResult<()> {
        py.detach(|| self.inner.prepare()).map_err(py_err)
    }

    /// Runs the full matrix and writes the report; returns the result rows
    /// as `(condition, aux, arm, test_set, seed, per)` tuples.
    #[allow(clippy::type_complexity)]
    fn run_matrix(&self, py: Python<'_>) -> PyResult<Vec<(String, String, String, String, u64, Option<f64>)>> {
        let report = py.detach(|| eval::run_all(&self.inner)).map_err(py_err)?;
        Ok(report
            .results
            .iter()
            .map(|r| {
                (
                    r.condition.to_string(),
                    r.aux.to_string(),
                    r.arm.to_string(),
                    r.test_set.clone(),
                    r.seed,
                    r.per,
                )
            })
            .collect())
    }

    /// Report names of the configured test sets.
    fn test_sets(&self) -> Vec<String> {
        self.inner.test_sets().into_iter().map(|(n, _)| n).collect()
    }
}

#[pymodule]
fn fdcae(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(mfcc, m)?)?;
    m.add_function(wrap_pyfunction!(track_pitch, m)?)?;
    m.add_function(wrap_pyfunction!(pitch_shift, m)?)?;
    m.add_function(wrap_pyfunction!(phone_error_rate, m)?)?;
    m.add_function(wrap_pyfunction!(phones, m)?)?;
    m.add_function(wrap_pyfunction!(joint_loss, m)?)?;
    m.add_function(wrap_pyfunction!(lfmmi, m)?)?;
    m.add_class::<Graph>()?;
    m.add_class::<Model>()?;
    m.add_class::<Pipeline>()?;
    Ok(())
}
