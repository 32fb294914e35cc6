//! Python bindings: graphs and weights, problem instances, DGD and DOGT runs,
//! saddle certificates and the preset experiment driver. Structured results
//! come back as plain dicts and lists.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

use distopt::dgd;
use distopt::dogt::{self, AlphaRegime, DogtOptions, YInit};
use distopt::harness::{self, ExperimentConfig, GraphSpec, ProblemPreset};
use distopt::linalg;
use distopt::netweights::{self, MixingMatrix};
use distopt::problems::ProblemInstance;
use distopt::trace::{RunOptions, Trace};

fn err(e: distopt::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn trace_json(t: &Trace) -> serde_json::Value {
    serde_json::json!({
        "algo": t.algo.name(),
        "iterations": t.iterations,
        "termination": t.termination,
        "x": t.x.as_slice(),
        "y": t.y.as_ref().map(|y| y.as_slice().to_vec()),
        "records": t.records,
    })
}

/// Mixing matrices for a named graph preset.
#[pyclass(name = "Network", module = "distopt")]
struct PyNetwork {
    spec: GraphSpec,
    inner: harness::Network,
}

#[pymethods]
impl PyNetwork {
    #[new]
    #[pyo3(signature = (graph, n, seed = 0))]
    fn new(graph: &str, n: usize, seed: u64) -> PyResult<Self> {
        let spec = GraphSpec { preset: graph.parse().map_err(err)?, n, seed };
        let inner = harness::build_network(&spec).map_err(err)?;
        Ok(PyNetwork { spec, inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.spec.n
    }

    #[getter]
    fn directed(&self) -> bool {
        self.spec.preset.directed()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.topology.edges.clone()
    }

    /// Doubly stochastic `D`; `None` for directed graphs.
    #[getter]
    fn d(&self) -> Option<Vec<Vec<f64>>> {
        self.inner.d.as_ref().map(|d| rows(&d.entries))
    }

    #[getter]
    fn r(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.r.entries)
    }

    #[getter]
    fn c(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.c.entries)
    }

    fn spectral_constants<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &netweights::spectral_constants(&self.inner.r, &self.inner.c).map_err(err)?)
    }

    /// Second largest singular value of `D`.
    fn sigma2(&self) -> Option<f64> {
        self.inner.d.as_ref().map(|d| netweights::sigma2(&d.entries))
    }

    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &harness::weights_report(&self.spec).map_err(err)?)
    }

    fn __repr__(&self) -> String {
        format!("Network(graph='{}', n={}, seed={})", self.spec.preset.name(), self.spec.n, self.spec.seed)
    }
}

impl PyNetwork {
    fn d_matrix(&self) -> PyResult<&MixingMatrix> {
        self.inner.d.as_ref().ok_or_else(|| PyValueError::new_err("DGD needs an undirected graph"))
    }
}

/// A distributed problem instance `F = Σ_i f_i` over `n` agents in `R^m`.
#[pyclass(name = "Problem", module = "distopt")]
struct PyProblem {
    inner: ProblemInstance,
}

#[pymethods]
impl PyProblem {
    #[staticmethod]
    #[pyo3(signature = (n, m, delta = 0.01, b_std = 1.0, convexified = false, seed = 0))]
    fn quadratic(n: usize, m: usize, delta: f64, b_std: f64, convexified: bool, seed: u64) -> PyResult<Self> {
        Self::from_preset(ProblemPreset::Quadratic { m, delta, b_std, convexified }, n, seed)
    }

    #[staticmethod]
    #[pyo3(signature = (n, d = 1, p = 1, tau = 0.2, seed = 0))]
    fn bilinear(n: usize, d: usize, p: usize, tau: f64, seed: u64) -> PyResult<Self> {
        Self::from_preset(ProblemPreset::Bilinear { d, p, tau }, n, seed)
    }

    #[staticmethod]
    #[pyo3(signature = (n, mu1 = 0.0, mu2 = -5.0, std = 5.0, sigma_tilde = 1.0, seed = 0))]
    fn gmm(n: usize, mu1: f64, mu2: f64, std: f64, sigma_tilde: f64, seed: u64) -> PyResult<Self> {
        Self::from_preset(ProblemPreset::Gmm { mu1, mu2, std, sigma_tilde }, n, seed)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    fn smoothness<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.smoothness)
    }

    fn value(&self, theta: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.value(&self.point(theta, self.inner.m)?))
    }

    fn gradient(&self, theta: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.gradient(&self.point(theta, self.inner.m)?).as_slice().to_vec())
    }

    /// Stacked gradient `∇F_c(x)` for an `nm`-vector.
    fn gradient_c(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.gradient_c(&self.point(x, self.inner.n * self.inner.m)?).as_slice().to_vec())
    }

    fn strict_saddle(&self) -> Option<Vec<f64>> {
        self.inner.strict_saddle().map(|k| k.theta.as_slice().to_vec())
    }

    fn __repr__(&self) -> String {
        format!("Problem(name='{}', n={}, m={})", self.inner.name, self.inner.n, self.inner.m)
    }
}

impl PyProblem {
    fn from_preset(preset: ProblemPreset, n: usize, seed: u64) -> PyResult<Self> {
        Ok(PyProblem { inner: harness::build_problem(&preset, n, seed).map_err(err)? })
    }

    fn point(&self, v: Vec<f64>, len: usize) -> PyResult<DVector<f64>> {
        if v.len() != len {
            return Err(PyValueError::new_err(format!("expected length {len}, got {}", v.len())));
        }
        Ok(DVector::from_vec(v))
    }
}

fn stacked(x0: Vec<f64>, problem: &ProblemInstance) -> PyResult<DVector<f64>> {
    let (n, m) = (problem.n, problem.m);
    match x0.len() {
        l if l == n * m => Ok(DVector::from_vec(x0)),
        l if l == m => Ok(linalg::replicate(&DVector::from_vec(x0), n)),
        l => Err(PyValueError::new_err(format!("x0 must have length m={m} or n*m={}, got {l}", n * m))),
    }
}

/// Runs DGD. `x0` is either one point (replicated) or the stacked vector.
#[pyfunction]
#[pyo3(signature = (problem, network, alpha, x0, iters = 1000, stride = 1))]
fn run_dgd<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    network: &PyNetwork,
    alpha: f64,
    x0: Vec<f64>,
    iters: usize,
    stride: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let x0 = stacked(x0, &problem.inner)?;
    let opts = RunOptions { max_iters: iters, record_stride: stride, ..RunOptions::default() };
    let t = dgd::run_dgd(&problem.inner, network.d_matrix()?, alpha, &x0, &opts).map_err(err)?;
    to_py(py, &trace_json(&t))
}

/// Runs DOGT and returns the trace with its Lyapunov parameters and
/// invariant diagnostics.
#[pyfunction]
#[pyo3(signature = (problem, network, alpha, x0, iters = 1000, stride = 1, force = false, y_init = "canonical", seed = 0))]
#[allow(clippy::too_many_arguments)]
fn run_dogt<'py>(
    py: Python<'py>,
    problem: &PyProblem,
    network: &PyNetwork,
    alpha: f64,
    x0: Vec<f64>,
    iters: usize,
    stride: usize,
    force: bool,
    y_init: &str,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let x0 = stacked(x0, &problem.inner)?;
    let opts = DogtOptions {
        run: RunOptions { max_iters: iters, record_stride: stride, ..RunOptions::default() },
        y_init: y_init.parse::<YInit>().map_err(err)?,
        seed,
        force,
        ..DogtOptions::default()
    };
    let run = dogt::run_dogt(&problem.inner, &network.inner.r, &network.inner.c, alpha, &x0, &opts).map_err(err)?;
    to_py(
        py,
        &serde_json::json!({
            "trace": trace_json(&run.trace),
            "params": run.params,
            "diagnostics": run.diagnostics,
            "t_eps": run.t_eps,
        }),
    )
}

/// Step-size bounds: DGD `alpha_max` (undirected only) and the DOGT bounds.
#[pyfunction]
fn step_bounds<'py>(py: Python<'py>, problem: &PyProblem, network: &PyNetwork) -> PyResult<Bound<'py, PyAny>> {
    let p = &problem.inner;
    let dgd_max = match &network.inner.d {
        Some(d) => Some(dgd::alpha_max(d, p.smoothness.l_c).map_err(err)?),
        None => None,
    };
    let spec = netweights::spectral_constants(&network.inner.r, &network.inner.c).map_err(err)?;
    let b = dogt::alpha_bound(&spec, p.smoothness.l_c, p.smoothness.l, p.n);
    to_py(
        py,
        &serde_json::json!({
            "dgd_alpha_max": dgd_max,
            "dogt_practical": b.get(AlphaRegime::Practical),
            "dogt_conservative": b.get(AlphaRegime::Conservative),
            "dogt_tilde": b.tilde,
        }),
    )
}

#[pyfunction]
#[pyo3(signature = (graph, n, seed = 0))]
fn check_weights<'py>(py: Python<'py>, graph: &str, n: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let spec = GraphSpec { preset: graph.parse().map_err(err)?, n, seed };
    to_py(py, &harness::weights_report(&spec).map_err(err)?)
}

/// Instability certificate at the strict saddle of a quadratic instance.
#[pyfunction]
#[pyo3(signature = (graph, n, m = 2, delta = 0.1, seed = 0, alpha = None))]
fn certify_saddle<'py>(py: Python<'py>, graph: &str, n: usize, m: usize, delta: f64, seed: u64, alpha: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    let spec = GraphSpec { preset: graph.parse().map_err(err)?, n, seed: 0 };
    to_py(py, &harness::saddle_report(&spec, m, delta, seed, alpha).map_err(err)?)
}

/// Preset experiment config as a JSON string.
#[pyfunction]
#[pyo3(signature = (name, directed = false))]
fn preset_config(name: &str, directed: bool) -> PyResult<String> {
    harness::preset(name, directed).and_then(|c| c.to_json()).map_err(err)
}

/// Runs an experiment config (JSON string) and returns the per-run summary
/// and metadata. Artifacts are written when the config names `out_dir`.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ExperimentConfig::from_json(config).map_err(err)?;
    let art = py.detach(|| harness::run(&cfg)).map_err(err)?;
    to_py(py, &serde_json::json!({ "summary": art.summary, "metadata": art.metadata }))
}

#[pymodule]
#[pyo3(name = "distopt")]
fn distopt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(run_dgd, m)?)?;
    m.add_function(wrap_pyfunction!(run_dogt, m)?)?;
    m.add_function(wrap_pyfunction!(step_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(check_weights, m)?)?;
    m.add_function(wrap_pyfunction!(certify_saddle, m)?)?;
    m.add_function(wrap_pyfunction!(preset_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
