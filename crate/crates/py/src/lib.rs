//! Python bindings. Complex matrices cross as nested lists of `complex`,
//! real batches as nested lists of `float` (one row per sample). Configs are
//! dicts or JSON strings holding the same keys as the Rust structs.

use std::path::PathBuf;

use ndarray::Array2;
use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyString};
use serde::de::DeserializeOwned;

use csi_p2d::channel::{self, ChannelConfig};
use csi_p2d::codec::{self as core_codec, CodecKind, CodecSpec};
use csi_p2d::cs::IstaConfig;
use csi_p2d::diffchain::{self, DifferentialChain};
use csi_p2d::harness::config::{ExperimentConfig, Profile};
use csi_p2d::training::{History, TrainConfig};
use csi_p2d::{numerics, pilots, ComplexMatrix, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

type Cm = Vec<Vec<Complex64>>;

fn to_matrix(rows: Cm) -> PyResult<ComplexMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|x| x.len() != c) {
        return Err(PyValueError::new_err("ragged matrix rows"));
    }
    ComplexMatrix::from_vec(r, c, rows.into_iter().flatten().collect()).map_err(py_err)
}

fn from_matrix(m: &ComplexMatrix) -> Cm {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn to_array(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|x| x.len() != c) {
        return Err(PyValueError::new_err("ragged matrix rows"));
    }
    Array2::from_shape_vec((r, c), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn from_array(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Accepts a dict (serialized with the json module) or a JSON string.
fn json_of(obj: &Bound<'_, PyAny>) -> PyResult<String> {
    if let Ok(s) = obj.cast::<PyString>() {
        return Ok(s.to_string());
    }
    let json = obj.py().import("json")?;
    json.call_method1("dumps", (obj,))?.extract()
}

fn parse_or<T: DeserializeOwned>(obj: Option<&Bound<'_, PyAny>>, default: T) -> PyResult<T> {
    match obj {
        None => Ok(default),
        Some(o) => serde_json::from_str(&json_of(o)?).map_err(|e| PyValueError::new_err(e.to_string())),
    }
}

fn parse_kind(kind: &str) -> PyResult<CodecKind> {
    match kind {
        "ista" => Ok(CodecKind::Ista),
        "ae" => Ok(CodecKind::Ae),
        k => Err(PyValueError::new_err(format!("unknown codec kind {k:?}; expected \"ista\" or \"ae\""))),
    }
}

fn history_rows<'py>(py: Python<'py>, h: &History) -> PyResult<Vec<Bound<'py, PyDict>>> {
    h.records
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("epoch", r.epoch)?;
            d.set_item("train_mse", r.train_mse)?;
            d.set_item("val_mse", r.val_mse)?;
            d.set_item("l_sym", r.l_sym)?;
            Ok(d)
        })
        .collect()
}

/// Unitary DFT matrix of size `n`.
#[pyfunction]
fn dft_matrix(n: usize) -> PyResult<Cm> {
    Ok(from_matrix(&numerics::dft_matrix(n).map_err(py_err)?))
}

#[pyfunction]
fn odir(a: Cm, delta: f64) -> PyResult<Cm> {
    Ok(from_matrix(&numerics::odir(&to_matrix(a)?, delta).map_err(py_err)?))
}

#[pyfunction]
fn regularized_pinv(q: Cm, delta: f64) -> PyResult<Cm> {
    Ok(from_matrix(&numerics::regularized_pinv(&to_matrix(q)?, delta).map_err(py_err)?))
}

#[pyfunction]
fn soft_threshold(x: Vec<f64>, theta: f64) -> PyResult<Vec<f64>> {
    csi_p2d::cs::soft_threshold(&x, theta).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (n_b, d, ports_per_subframe = pilots::DEFAULT_PORTS_PER_SUBFRAME))]
fn subframes_required(n_b: usize, d: usize, ports_per_subframe: usize) -> PyResult<usize> {
    pilots::subframes_required(n_b, d, ports_per_subframe).map_err(py_err)
}

/// NMSE in dB over paired lists of matrices.
#[pyfunction]
fn nmse_db(truth: Vec<Cm>, est: Vec<Cm>) -> PyResult<f64> {
    let t = truth.into_iter().map(to_matrix).collect::<PyResult<Vec<_>>>()?;
    let e = est.into_iter().map(to_matrix).collect::<PyResult<Vec<_>>>()?;
    csi_p2d::harness::nmse_db(&t, &e).map_err(py_err)
}

#[pyfunction]
fn fit_gamma(prev_estimates: Vec<Cm>, current_truth: Vec<Cm>) -> PyResult<f64> {
    let p = prev_estimates.into_iter().map(to_matrix).collect::<PyResult<Vec<_>>>()?;
    let t = current_truth.into_iter().map(to_matrix).collect::<PyResult<Vec<_>>>()?;
    diffchain::fit_gamma(&p, &t).map_err(py_err)
}

#[pyfunction]
fn vectorize(h: Cm) -> PyResult<Vec<f64>> {
    Ok(core_codec::vectorize(&to_matrix(h)?))
}

#[pyfunction]
fn devectorize(v: Vec<f64>, rows: usize, cols: usize) -> PyResult<Cm> {
    Ok(from_matrix(&core_codec::devectorize(&v, rows, cols).map_err(py_err)?))
}

#[pyclass(name = "PilotPattern", module = "csi_p2d_py", frozen)]
struct PyPilotPattern(pilots::PilotPattern);

#[pymethods]
impl PyPilotPattern {
    #[new]
    fn new(n_f: usize, m_f: usize, d: usize) -> PyResult<Self> {
        pilots::build_pattern(n_f, m_f, d).map(Self).map_err(py_err)
    }

    #[getter]
    fn n_f(&self) -> usize {
        self.0.n_f()
    }

    #[getter]
    fn m_f(&self) -> usize {
        self.0.m_f()
    }

    #[getter]
    fn d(&self) -> usize {
        self.0.d()
    }

    #[getter]
    fn stride(&self) -> usize {
        self.0.stride()
    }

    #[getter]
    fn offsets(&self) -> Vec<usize> {
        self.0.offsets().to_vec()
    }

    #[getter]
    fn dr_f(&self) -> f64 {
        self.0.dr_f()
    }

    /// Subcarrier indices carrying pilots for antenna pattern `j`.
    fn columns(&self, j: usize) -> PyResult<Vec<usize>> {
        self.0.columns(j).map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        serde_json::from_str(s).map(Self).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("PilotPattern(n_f={}, m_f={}, d={})", self.0.n_f(), self.0.m_f(), self.0.d())
    }
}

#[pyfunction]
fn sample_pilots(h: Cm, pattern: &PyPilotPattern) -> PyResult<Cm> {
    Ok(from_matrix(&pilots::sample_pilots(&to_matrix(h)?, &pattern.0).map_err(py_err)?))
}

#[pyclass(name = "P2dEstimator", module = "csi_p2d_py", frozen)]
struct PyP2dEstimator(csi_p2d::p2d::P2dEstimator);

#[pymethods]
impl PyP2dEstimator {
    #[new]
    #[pyo3(signature = (pattern, n_t, delta = csi_p2d::p2d::DEFAULT_DELTA))]
    fn new(pattern: &PyPilotPattern, n_t: usize, delta: f64) -> PyResult<Self> {
        csi_p2d::p2d::build_estimator(&pattern.0, n_t, delta).map(Self).map_err(py_err)
    }

    #[getter]
    fn n_t(&self) -> usize {
        self.0.n_t()
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.0.delta()
    }

    fn is_underdetermined(&self) -> bool {
        self.0.is_underdetermined()
    }

    /// `n_b x m_f` pilot observations to an `n_b x n_t` angular-delay estimate.
    fn estimate(&self, pilots: Cm) -> PyResult<Cm> {
        Ok(from_matrix(&self.0.estimate(&to_matrix(pilots)?).map_err(py_err)?))
    }

    /// Samples the pilots of a full `n_b x n_f` CSI matrix and estimates.
    fn estimate_from_csi(&self, h: Cm) -> PyResult<Cm> {
        Ok(from_matrix(&self.0.estimate_from_csi(&to_matrix(h)?).map_err(py_err)?))
    }
}

#[pyclass(name = "Dataset", module = "csi_p2d_py", frozen)]
struct PyDataset(channel::Dataset);

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        channel::load(path).map(Self).map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        channel::save(&self.0, path).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn n_timeslots(&self) -> usize {
        self.0.n_timeslots()
    }

    #[getter]
    fn matrix_shape(&self) -> (usize, usize) {
        self.0.matrix_shape()
    }

    #[getter]
    fn train(&self) -> Vec<usize> {
        self.0.train().to_vec()
    }

    #[getter]
    fn val(&self) -> Vec<usize> {
        self.0.val().to_vec()
    }

    /// All timeslots of sample `i`.
    fn sample(&self, i: usize) -> PyResult<Vec<Cm>> {
        let s = self
            .0
            .samples()
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("sample {i} out of range")))?;
        Ok(s.timeslots().iter().map(from_matrix).collect())
    }
}

/// Synthetic dataset. `config` overrides the desk channel defaults.
#[pyfunction]
#[pyo3(signature = (n_samples, n_timeslots = 1, config = None))]
fn generate(n_samples: usize, n_timeslots: usize, config: Option<&Bound<'_, PyAny>>) -> PyResult<PyDataset> {
    let cfg = match config {
        None => ChannelConfig::desk(),
        Some(o) => {
            let mut base = serde_json::to_value(ChannelConfig::desk()).unwrap();
            let over: serde_json::Value =
                serde_json::from_str(&json_of(o)?).map_err(|e| PyValueError::new_err(e.to_string()))?;
            let (Some(b), Some(v)) = (base.as_object_mut(), over.as_object()) else {
                return Err(PyValueError::new_err("channel config must be an object"));
            };
            for (k, x) in v {
                b.insert(k.clone(), x.clone());
            }
            serde_json::from_value(base).map_err(|e| PyValueError::new_err(e.to_string()))?
        }
    };
    channel::generate(&cfg, n_samples, n_timeslots).map(PyDataset).map_err(py_err)
}

/// A trainable ISTA or autoencoder codec over real row vectors.
#[pyclass(name = "Codec", module = "csi_p2d_py")]
struct PyCodec(core_codec::Codec);

#[pymethods]
impl PyCodec {
    #[new]
    #[pyo3(signature = (kind, cr, n_total, seed = 0, ista = None, shared_planes = false))]
    fn new(
        kind: &str,
        cr: f64,
        n_total: usize,
        seed: u64,
        ista: Option<&Bound<'_, PyAny>>,
        shared_planes: bool,
    ) -> PyResult<Self> {
        let spec = CodecSpec { kind: parse_kind(kind)?, cr, shared_planes };
        let ista: IstaConfig = parse_or(ista, IstaConfig::default())?;
        core_codec::Codec::new(&spec, n_total, &ista, seed).map(Self).map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (kind, cr, path, shared_planes = false))]
    fn load(kind: &str, cr: f64, path: PathBuf, shared_planes: bool) -> PyResult<Self> {
        let spec = CodecSpec { kind: parse_kind(kind)?, cr, shared_planes };
        core_codec::Codec::load(&spec, path).map(Self).map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(path).map_err(py_err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind().name()
    }

    #[getter]
    fn cr(&self) -> f64 {
        self.0.cr()
    }

    #[getter]
    fn n_total(&self) -> usize {
        self.0.n_total()
    }

    /// Trains and returns the per-epoch history as a list of dicts.
    #[pyo3(signature = (train_in, train_tgt, val_in, val_tgt, train = None))]
    fn fit<'py>(
        &mut self,
        py: Python<'py>,
        train_in: Vec<Vec<f64>>,
        train_tgt: Vec<Vec<f64>>,
        val_in: Vec<Vec<f64>>,
        val_tgt: Vec<Vec<f64>>,
        train: Option<&Bound<'py, PyAny>>,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let cfg: TrainConfig = parse_or(train, TrainConfig::default())?;
        let (ti, tt, vi, vt) = (to_array(train_in)?, to_array(train_tgt)?, to_array(val_in)?, to_array(val_tgt)?);
        let h = py
            .detach(|| self.0.fit(ti.view(), tt.view(), vi.view(), vt.view(), &cfg))
            .map_err(py_err)?;
        history_rows(py, &h)
    }

    /// Compress and reconstruct each row.
    fn apply(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(from_array(&self.0.apply(to_array(x)?.view()).map_err(py_err)?))
    }

    /// Measurement vectors of the ISTA codec (no normalization applied).
    fn encode(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        match &self.0 {
            core_codec::Codec::Ista(m) => Ok(from_array(&m.encode(to_array(x)?.view()).map_err(py_err)?)),
            _ => Err(PyValueError::new_err("encode is only exposed for the ista codec")),
        }
    }
}

#[pyclass(name = "DifferentialChain", module = "csi_p2d_py", frozen)]
struct PyChain(DifferentialChain);

#[pymethods]
impl PyChain {
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        DifferentialChain::load(dir).map(Self).map_err(py_err)
    }

    #[getter]
    fn timeslots(&self) -> usize {
        self.0.timeslots()
    }

    #[getter]
    fn gamma_ls(&self) -> Vec<f64> {
        self.0.gamma_ls().to_vec()
    }

    /// Reconstructs one sequence of P2D estimates, one matrix per timeslot.
    fn infer(&self, sequence: Vec<Cm>) -> PyResult<Vec<Cm>> {
        let seq = sequence.into_iter().map(to_matrix).collect::<PyResult<Vec<_>>>()?;
        let out = diffchain::chain_infer(&self.0, &seq).map_err(py_err)?;
        Ok(out.iter().map(from_matrix).collect())
    }
}

/// Runs a sweep and returns its rows as dicts. `config` overlays the profile
/// defaults exactly like the CLI's `--config` file.
#[pyfunction]
#[pyo3(signature = (config, profile = "desk"))]
fn run_sweep<'py>(py: Python<'py>, config: &Bound<'py, PyAny>, profile: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let p: Profile = profile.parse().map_err(py_err)?;
    let mut cfg = ExperimentConfig::from_json(p, &json_of(config)?).map_err(py_err)?;
    cfg.resolve_seeds();
    let out = py.detach(|| csi_p2d::harness::run_sweep(&cfg)).map_err(py_err)?;
    out.rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("dr_f", r.dr_f)?;
            d.set_item("d", r.d)?;
            d.set_item("cr", r.cr)?;
            d.set_item("timeslot", r.timeslot)?;
            d.set_item("codec", &r.codec)?;
            d.set_item("nmse_db", r.nmse_db)?;
            d.set_item("wall_seconds", r.wall_seconds)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn csi_p2d_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(dft_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(odir, m)?)?;
    m.add_function(wrap_pyfunction!(regularized_pinv, m)?)?;
    m.add_function(wrap_pyfunction!(soft_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(subframes_required, m)?)?;
    m.add_function(wrap_pyfunction!(sample_pilots, m)?)?;
    m.add_function(wrap_pyfunction!(nmse_db, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(vectorize, m)?)?;
    m.add_function(wrap_pyfunction!(devectorize, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_class::<PyPilotPattern>()?;
    m.add_class::<PyP2dEstimator>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyCodec>()?;
    m.add_class::<PyChain>()?;
    Ok(())
}
