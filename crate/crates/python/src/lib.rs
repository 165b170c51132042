//! Python bindings for the simulation kernel and the benchmark harness.

use std::sync::{Arc, Mutex};

use devstone_bench::runner::{run_in_process_with, Status};
use devstone_bench::verify::{Outcome, VerifyOptions};
use devstone_bench::RunConfig;
use devstone_core::dhrystone;
use devstone_core::{
    injection_schedule, AnalyticPrediction, BenchmarkSpec, Counts, Family, SimulationContext,
    TransitionCounters,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl ToString) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_family(s: &str) -> PyResult<Family> {
    s.parse().map_err(value_err)
}

/// Parameters of one DEVStone model.
#[pyclass(
    name = "BenchmarkSpec",
    module = "devstone",
    frozen,
    eq,
    skip_from_py_object
)]
#[derive(Clone, PartialEq)]
struct PySpec {
    inner: BenchmarkSpec,
}

#[pymethods]
impl PySpec {
    #[new]
    #[pyo3(signature = (family, width, depth, int_delay = 0.0, ext_delay = 0.0, events = 1))]
    fn new(
        family: &str,
        width: u32,
        depth: u32,
        int_delay: f64,
        ext_delay: f64,
        events: u32,
    ) -> PyResult<Self> {
        let inner = BenchmarkSpec::new(parse_family(family)?, width, depth)
            .with_delays(int_delay, ext_delay)
            .with_events(events);
        inner.validate().map_err(value_err)?;
        Ok(PySpec { inner })
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family.as_str()
    }

    #[getter]
    fn width(&self) -> u32 {
        self.inner.width
    }

    #[getter]
    fn depth(&self) -> u32 {
        self.inner.depth
    }

    #[getter]
    fn int_delay(&self) -> f64 {
        self.inner.int_delay
    }

    #[getter]
    fn ext_delay(&self) -> f64 {
        self.inner.ext_delay
    }

    #[getter]
    fn events(&self) -> u32 {
        self.inner.n_events
    }

    /// Number of atomic models the built topology contains.
    fn atomic_count(&self) -> PyResult<u128> {
        devstone_core::analytics::atomic_count(
            self.inner.family,
            self.inner.width,
            self.inner.depth,
        )
        .map_err(value_err)
    }

    /// Topology outline, one line per component and coupling.
    fn outline(&self) -> PyResult<String> {
        let m = devstone_core::build(&self.inner).map_err(runtime_err)?;
        Ok(m.root.outline())
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "BenchmarkSpec('{}', {}, {}, int_delay={}, ext_delay={}, events={})",
            s.family, s.width, s.depth, s.int_delay, s.ext_delay, s.n_events
        )
    }
}

/// Transition and event counters.
#[pyclass(name = "Counts", module = "devstone", frozen, eq, skip_from_py_object)]
#[derive(Clone, Copy, PartialEq)]
struct PyCounts {
    #[pyo3(get)]
    delta_int: u64,
    #[pyo3(get)]
    delta_ext: u64,
    #[pyo3(get)]
    events: u64,
}

impl From<Counts> for PyCounts {
    fn from(c: Counts) -> Self {
        PyCounts {
            delta_int: c.delta_int,
            delta_ext: c.delta_ext,
            events: c.events,
        }
    }
}

#[pymethods]
impl PyCounts {
    fn as_tuple(&self) -> (u64, u64, u64) {
        (self.delta_int, self.delta_ext, self.events)
    }

    fn __repr__(&self) -> String {
        format!(
            "Counts(delta_int={}, delta_ext={}, events={})",
            self.delta_int, self.delta_ext, self.events
        )
    }
}

/// Analytic counts for a spec.
#[pyclass(
    name = "Prediction",
    module = "devstone",
    frozen,
    eq,
    skip_from_py_object
)]
#[derive(Clone, Copy, PartialEq)]
struct PyPrediction {
    inner: AnalyticPrediction,
}

#[pymethods]
impl PyPrediction {
    #[getter]
    fn n_atomics(&self) -> u128 {
        self.inner.n_atomics
    }

    #[getter]
    fn n_delta_int(&self) -> u128 {
        self.inner.n_delta_int
    }

    #[getter]
    fn n_delta_ext(&self) -> u128 {
        self.inner.n_delta_ext
    }

    #[getter]
    fn n_events(&self) -> u128 {
        self.inner.n_events
    }

    /// True when `counts` equals the predicted counters exactly.
    fn matches(&self, counts: &PyCounts) -> bool {
        self.inner.matches(&Counts {
            delta_int: counts.delta_int,
            delta_ext: counts.delta_ext,
            events: counts.events,
        })
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "Prediction(n_atomics={}, n_delta_int={}, n_delta_ext={}, n_events={})",
            p.n_atomics, p.n_delta_int, p.n_delta_ext, p.n_events
        )
    }
}

/// A stepping simulation of one DEVStone model.
#[pyclass(name = "Simulation", module = "devstone")]
struct PySimulation {
    ctx: Mutex<SimulationContext>,
    counters: Arc<TransitionCounters>,
}

impl PySimulation {
    fn with_ctx<T>(&self, f: impl FnOnce(&mut SimulationContext) -> T) -> T {
        let mut guard = self.ctx.lock().unwrap_or_else(|p| p.into_inner());
        f(&mut guard)
    }
}

#[pymethods]
impl PySimulation {
    #[new]
    fn new(spec: &PySpec) -> PyResult<Self> {
        let model = devstone_core::build(&spec.inner).map_err(runtime_err)?;
        let ctx = SimulationContext::initialize(model.root, injection_schedule(&spec.inner))
            .map_err(runtime_err)?;
        Ok(PySimulation {
            ctx: Mutex::new(ctx),
            counters: model.counters,
        })
    }

    /// Advances to the next event time and processes it.
    fn step(&self) -> PyResult<()> {
        self.with_ctx(|c| c.step()).map_err(runtime_err)
    }

    fn next_event_time(&self) -> f64 {
        self.with_ctx(|c| c.next_event_time())
    }

    #[getter]
    fn clock(&self) -> f64 {
        self.with_ctx(|c| c.clock())
    }

    #[getter]
    fn steps(&self) -> u64 {
        self.with_ctx(|c| c.stats().steps)
    }

    fn is_quiescent(&self) -> bool {
        self.with_ctx(|c| c.is_quiescent())
    }

    /// Runs until no events remain and returns the counters.
    fn run(&self, py: Python<'_>) -> PyResult<PyCounts> {
        py.detach(|| self.with_ctx(|c| c.run_to_quiescence().map(|_| ())))
            .map_err(runtime_err)?;
        Ok(self.counters.snapshot().into())
    }

    fn counters(&self) -> PyCounts {
        self.counters.snapshot().into()
    }
}

/// Predicted atomic, transition and event counts.
#[pyfunction]
fn predict(spec: &PySpec) -> PyResult<PyPrediction> {
    devstone_core::predict(&spec.inner)
        .map(|inner| PyPrediction { inner })
        .map_err(value_err)
}

/// Builds and runs `spec` to quiescence.
#[pyfunction]
fn simulate(py: Python<'_>, spec: &PySpec) -> PyResult<PyCounts> {
    let s = spec.inner;
    py.detach(|| devstone_core::simulate(&s))
        .map(Into::into)
        .map_err(runtime_err)
}

/// Topology outline of the named family.
#[pyfunction]
fn outline(family: &str, width: u32, depth: u32) -> PyResult<String> {
    let spec = BenchmarkSpec::new(parse_family(family)?, width, depth);
    let m = devstone_core::build(&spec).map_err(runtime_err)?;
    Ok(m.root.outline())
}

/// Simulates every cell of a grid and compares it with the predictions.
/// Returns a dict with per-outcome tallies and mismatch descriptions.
#[pyfunction]
#[pyo3(signature = (max_width = None, max_depth = None, families = None, events = 1))]
fn verify<'py>(
    py: Python<'py>,
    max_width: Option<u32>,
    max_depth: Option<u32>,
    families: Option<Vec<String>>,
    events: u32,
) -> PyResult<Bound<'py, PyDict>> {
    let mut opts = VerifyOptions {
        max_width,
        max_depth,
        events,
        ..Default::default()
    };
    if let Some(names) = families {
        opts.families = names
            .iter()
            .map(|n| parse_family(n))
            .collect::<PyResult<_>>()?;
    }
    let report = py.detach(|| devstone_bench::verify(&opts));
    let out = PyDict::new(py);
    out.set_item("cells", report.cells.len())?;
    out.set_item("matched", report.count(&Outcome::Match))?;
    out.set_item("skipped", report.count(&Outcome::Skipped))?;
    let mismatches: Vec<String> = report.mismatches().map(|c| c.decomposition()).collect();
    out.set_item("mismatches", mismatches)?;
    out.set_item("clean", report.is_clean())?;
    Ok(out)
}

/// Runs timed trials in this process (peak memory is the whole
/// interpreter's). Returns a dict with the run's status and means.
#[pyfunction]
#[pyo3(signature = (spec, trials = 1, time_cap = 1200.0))]
fn run_trials<'py>(
    py: Python<'py>,
    spec: &PySpec,
    trials: u32,
    time_cap: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = RunConfig::new(spec.inner);
    cfg.trials = trials;
    cfg.time_cap = time_cap;
    cfg.isolate = false;
    let r = py
        .detach(|| run_in_process_with(&cfg, devstone_core::build))
        .map_err(value_err)?;
    let out = PyDict::new(py);
    out.set_item("status", r.status.as_str())?;
    out.set_item("ok", r.status == Status::Ok)?;
    out.set_item("mean_wall_time_s", r.mean_wall_time_s)?;
    out.set_item("mean_peak_mem_bytes", r.mean_peak_mem_bytes)?;
    out.set_item(
        "wall_times_s",
        r.trials.iter().map(|t| t.wall_time_s).collect::<Vec<_>>(),
    )?;
    out.set_item("counts", r.observed.map(PyCounts::from))?;
    Ok(out)
}

/// Burns about `seconds` of CPU and returns the iterations executed.
#[pyfunction]
fn burn(py: Python<'_>, seconds: f64) -> u64 {
    py.detach(|| dhrystone::burn(seconds))
}

#[pymodule]
fn devstone(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpec>()?;
    m.add_class::<PyCounts>()?;
    m.add_class::<PyPrediction>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(outline, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(run_trials, m)?)?;
    m.add_function(wrap_pyfunction!(burn, m)?)?;
    m.add("FAMILIES", Family::ALL.map(Family::as_str).to_vec())?;
    Ok(())
}
