// SPDX-License-Identifier: MIT OR Apache-2.0

//! Python bindings for the trajectory correction engine.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use trace_core::config::{AblationVariant, HyperParameters};
use trace_core::engine::{self, EngineConfig};
use trace_core::evaluation::{self, CellResult};
use trace_core::fixture::master_fixture;
use trace_core::geometry::{self, Matrix};
use trace_core::model::{ArchiveItem, CandidateTrajectory, ModelWeightStats};
use trace_core::{archive, invariant, operators};

create_exception!(trace_py, TraceError, PyValueError, "Engine error.");

fn err(e: trace_core::TraceError) -> PyErr {
    TraceError::new_err(e.to_string())
}

fn json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| TraceError::new_err(e.to_string()))
}

/// Hyperparameter set; defaults are the published values.
#[pyclass(name = "Config", module = "trace_py", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: HyperParameters,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self { inner: HyperParameters::default() }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: HyperParameters::from_json_str(text).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: HyperParameters::load(&path).map_err(err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json_pretty()
    }

    fn with_variant(&self, variant: &str) -> PyResult<Self> {
        let v: AblationVariant = variant.parse().map_err(err)?;
        Ok(Self { inner: self.inner.clone().with_variant(v) })
    }

    #[getter]
    fn tau_dim(&self) -> f64 {
        self.inner.tau_dim
    }

    #[getter]
    fn tau_i(&self) -> f64 {
        self.inner.tau_i
    }

    #[getter]
    fn gamma_conf(&self) -> f64 {
        self.inner.gamma_conf
    }

    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.ablation_variant.as_str()
    }

    fn __repr__(&self) -> String {
        format!("Config(variant={:?})", self.inner.ablation_variant.as_str())
    }
}

fn config_or_default(cfg: Option<&PyConfig>) -> HyperParameters {
    cfg.map(|c| c.inner.clone()).unwrap_or_default()
}

/// One item: an `n × (L+1)` score table plus metadata.
#[pyclass(name = "Trajectory", module = "trace_py", skip_from_py_object)]
#[derive(Clone)]
struct PyTrajectory {
    inner: ArchiveItem,
}

#[pymethods]
impl PyTrajectory {
    #[new]
    #[pyo3(signature = (item_id, scores, benchmark_id = "default", truthful = None, token_counts = None, texts = None))]
    fn new(
        item_id: &str,
        scores: Vec<Vec<f64>>,
        benchmark_id: &str,
        truthful: Option<Vec<usize>>,
        token_counts: Option<Vec<usize>>,
        texts: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let n = scores.len();
        let width = scores.first().map_or(0, Vec::len);
        if width == 0 || scores.iter().any(|r| r.len() != width) {
            return Err(TraceError::new_err("scores must be a non-empty rectangular table"));
        }
        let traj = CandidateTrajectory {
            item_id: item_id.to_owned(),
            benchmark_id: benchmark_id.to_owned(),
            n,
            depth: width - 1,
            scores: scores.into_iter().flatten().collect(),
            candidate_texts: texts.unwrap_or_else(|| vec![String::new(); n]),
            candidate_token_counts: token_counts.unwrap_or_else(|| vec![1; n]),
            truthful_indices: truthful,
        };
        traj.validate().map_err(err)?;
        Ok(Self { inner: ArchiveItem::new(traj) })
    }

    #[getter]
    fn item_id(&self) -> &str {
        self.inner.item_id()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.trajectory.n
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.trajectory.depth
    }

    #[getter]
    fn has_logits(&self) -> bool {
        self.inner.has_logits()
    }

    fn base(&self) -> Vec<f64> {
        self.inner.trajectory.base()
    }

    fn layer(&self, layer: usize) -> PyResult<Vec<f64>> {
        if layer > self.inner.trajectory.depth {
            return Err(TraceError::new_err(format!("layer {layer} exceeds L")));
        }
        Ok(self.inner.trajectory.layer(layer))
    }

    /// Effective dimension of the centered mid-window trajectory.
    #[pyo3(signature = (config = None))]
    fn d_eff(&self, config: Option<&PyConfig>) -> PyResult<f64> {
        let hp = config_or_default(config);
        let traj = &self.inner.trajectory;
        let mid = geometry::mid_window(traj.depth, &hp).map_err(err)?;
        geometry::d_eff(&geometry::center(traj, &mid).x).map_err(err)
    }

    fn __repr__(&self) -> String {
        let t = &self.inner.trajectory;
        format!("Trajectory({:?}, n={}, L={})", t.item_id, t.n, t.depth)
    }
}

/// Routed decision for one item.
#[pyclass(name = "Verdict", module = "trace_py", frozen)]
struct PyVerdict {
    inner: engine::Verdict,
}

#[pymethods]
impl PyVerdict {
    #[getter]
    fn item_id(&self) -> &str {
        &self.inner.item_id
    }

    #[getter]
    fn chosen_index(&self) -> usize {
        self.inner.chosen_index
    }

    #[getter]
    fn regime(&self) -> &'static str {
        self.inner.regime.as_str()
    }

    #[getter]
    fn final_scores(&self) -> Vec<f64> {
        self.inner.final_scores.clone()
    }

    #[getter]
    fn d_eff(&self) -> f64 {
        self.inner.diagnostics.d_eff
    }

    #[getter]
    fn l_star(&self) -> Option<usize> {
        self.inner.diagnostics.l_star
    }

    #[getter]
    fn lambda_(&self) -> Option<f64> {
        self.inner.diagnostics.lambda
    }

    fn to_json(&self) -> PyResult<String> {
        json(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Verdict({:?}, chosen={}, regime={})",
            self.inner.item_id, self.inner.chosen_index, self.inner.regime
        )
    }
}

fn engine_config(i_m: f64, config: Option<&PyConfig>, variant: Option<&str>) -> PyResult<EngineConfig> {
    let mut cfg = EngineConfig::new(config_or_default(config), i_m);
    if let Some(v) = variant {
        cfg = cfg.with_variant(v.parse().map_err(err)?);
    }
    Ok(cfg)
}

#[pyfunction]
#[pyo3(signature = (item, i_m, config = None, variant = None))]
fn run_item(item: &PyTrajectory, i_m: f64, config: Option<&PyConfig>, variant: Option<&str>) -> PyResult<PyVerdict> {
    let cfg = engine_config(i_m, config, variant)?;
    Ok(PyVerdict { inner: engine::run_item(&item.inner, &cfg).map_err(err)? })
}

#[pyfunction]
#[pyo3(signature = (items, i_m, config = None, variant = None, jobs = 1))]
fn run_batch(
    py: Python<'_>,
    items: Vec<PyRef<'_, PyTrajectory>>,
    i_m: f64,
    config: Option<&PyConfig>,
    variant: Option<&str>,
    jobs: usize,
) -> PyResult<Vec<PyVerdict>> {
    let cfg = engine_config(i_m, config, variant)?;
    let owned: Vec<ArchiveItem> = items.iter().map(|t| t.inner.clone()).collect();
    let verdicts = py.detach(|| engine::run_batch(&owned, &cfg, jobs)).map_err(err)?;
    Ok(verdicts.into_iter().map(|inner| PyVerdict { inner }).collect())
}

#[pyfunction]
fn read_archive(path: PathBuf) -> PyResult<Vec<PyTrajectory>> {
    let items = archive::read_trajectory_archive(&path).map_err(err)?;
    Ok(items.into_iter().map(|inner| PyTrajectory { inner }).collect())
}

#[pyfunction]
fn write_archive(items: Vec<PyRef<'_, PyTrajectory>>, path: PathBuf) -> PyResult<()> {
    let owned: Vec<ArchiveItem> = items.iter().map(|t| t.inner.clone()).collect();
    archive::write_trajectory_archive(&owned, &path).map_err(err)
}

/// Participation ratio of a row-major matrix.
#[pyfunction]
fn d_eff(rows: Vec<Vec<f64>>) -> PyResult<f64> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(TraceError::new_err("matrix rows differ in length"));
    }
    let n = rows.len();
    geometry::d_eff(&Matrix::new(n, cols, rows.into_iter().flatten().collect())).map_err(err)
}

#[pyfunction]
fn rcv(row_norms: Vec<f64>) -> PyResult<f64> {
    invariant::rcv(&row_norms).map_err(err)
}

/// Weights-only invariant from a statistics file, as JSON.
#[pyfunction]
#[pyo3(signature = (path, config = None))]
fn compute_invariant(path: PathBuf, config: Option<&PyConfig>) -> PyResult<String> {
    let stats = ModelWeightStats::load(&path).map_err(err)?;
    json(&invariant::resolve_invariant(&stats, &config_or_default(config)).map_err(err)?)
}

#[pyfunction]
fn scalar_lambda(base: Vec<f64>, summary: Vec<f64>, eta: f64) -> f64 {
    operators::scalar_lambda(&base, &summary, eta)
}

#[pyfunction]
fn mc1(scores: Vec<f64>, truthful: Vec<usize>) -> u8 {
    evaluation::mc1(&scores, &truthful)
}

#[pyfunction]
fn mc2(scores: Vec<f64>, truthful: Vec<usize>) -> f64 {
    evaluation::mc2(&scores, &truthful)
}

#[pyfunction]
#[pyo3(signature = (deltas, resamples = 200_000, level = 0.95, seed = evaluation::stats::DEFAULT_SEED))]
fn bootstrap_ci(py: Python<'_>, deltas: Vec<f64>, resamples: usize, level: f64, seed: u64) -> PyResult<(f64, f64)> {
    let ci = py.detach(|| evaluation::bootstrap_ci(&deltas, resamples, level, seed)).map_err(err)?;
    Ok((ci.lo, ci.hi))
}

#[pyfunction]
fn sign_test(deltas: Vec<f64>) -> PyResult<f64> {
    evaluation::sign_test(&deltas).map_err(err)
}

/// Summary of the shipped 45-cell grid, as JSON.
#[pyfunction]
fn fixture_summary() -> PyResult<String> {
    let cells: Vec<CellResult> = master_fixture().iter().map(CellResult::from).collect();
    json(&evaluation::aggregate_grid(&cells).map_err(err)?)
}

#[pymodule]
fn trace_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TraceError", m.py().get_type::<TraceError>())?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyVerdict>()?;
    m.add_function(wrap_pyfunction!(run_item, m)?)?;
    m.add_function(wrap_pyfunction!(run_batch, m)?)?;
    m.add_function(wrap_pyfunction!(read_archive, m)?)?;
    m.add_function(wrap_pyfunction!(write_archive, m)?)?;
    m.add_function(wrap_pyfunction!(d_eff, m)?)?;
    m.add_function(wrap_pyfunction!(rcv, m)?)?;
    m.add_function(wrap_pyfunction!(compute_invariant, m)?)?;
    m.add_function(wrap_pyfunction!(scalar_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(mc1, m)?)?;
    m.add_function(wrap_pyfunction!(mc2, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_ci, m)?)?;
    m.add_function(wrap_pyfunction!(sign_test, m)?)?;
    m.add_function(wrap_pyfunction!(fixture_summary, m)?)?;
    Ok(())
}
