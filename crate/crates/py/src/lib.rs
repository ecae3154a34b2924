//! Python bindings: `import sipns`.
//!
//! Parameters, states and scenarios are classes; everything structured that
//! comes back (trajectories, sweep reports, optimizer results) is a plain
//! dict with the same keys as the CLI's JSON files.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;
use sipns_core::analysis;
use sipns_core::optimize::{self, ControlBound, ControlSpec};
use sipns_core::{solver, ParamName};

fn to_py_err(err: sipns_core::Error) -> PyErr {
    if err.is_numerical() {
        PyRuntimeError::new_err(err.to_string())
    } else {
        PyValueError::new_err(err.to_string())
    }
}

fn param_name(name: &str) -> PyResult<ParamName> {
    name.parse().map_err(to_py_err)
}

/// Serializes through JSON so Python sees the same shape the CLI writes.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// The ten rates. Missing keyword arguments take the reference values.
#[pyclass(name = "ModelParams", module = "sipns", skip_from_py_object)]
#[derive(Clone)]
struct PyModelParams {
    inner: sipns_core::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (**rates))]
    fn new(rates: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut inner = sipns_core::ModelParams::default();
        if let Some(rates) = rates {
            for (key, value) in rates.iter() {
                inner.set(param_name(&key.extract::<String>()?)?, value.extract()?);
            }
        }
        inner.validate().map_err(to_py_err)?;
        Ok(PyModelParams { inner })
    }

    fn __getitem__(&self, name: &str) -> PyResult<f64> {
        Ok(self.inner.get(param_name(name)?))
    }

    fn __setitem__(&mut self, name: &str, value: f64) -> PyResult<()> {
        let name = param_name(name)?;
        name.check(value).map_err(to_py_err)?;
        self.inner.set(name, value);
        Ok(())
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __eq__(&self, other: PyRef<'_, Self>) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        let fields: Vec<String> = ParamName::ALL
            .iter()
            .map(|&n| format!("{n}={:?}", self.inner.get(n)))
            .collect();
        format!("ModelParams({})", fields.join(", "))
    }
}

#[pyclass(name = "MarketState", module = "sipns", skip_from_py_object)]
#[derive(Clone)]
struct PyMarketState {
    inner: sipns_core::MarketState,
}

#[pymethods]
impl PyMarketState {
    #[new]
    #[allow(non_snake_case)]
    fn new(S: f64, I: f64, P: f64, N: f64) -> Self {
        PyMarketState {
            inner: sipns_core::MarketState::new(S, I, P, N),
        }
    }

    #[getter(S)]
    fn s(&self) -> f64 {
        self.inner.s
    }

    #[getter(I)]
    fn i(&self) -> f64 {
        self.inner.i
    }

    #[getter(P)]
    fn p(&self) -> f64 {
        self.inner.p
    }

    #[getter(N)]
    fn n(&self) -> f64 {
        self.inner.n
    }

    fn to_list(&self) -> Vec<f64> {
        self.inner.to_array().to_vec()
    }

    fn total(&self) -> f64 {
        self.inner.total()
    }

    fn __repr__(&self) -> String {
        let x = &self.inner;
        format!(
            "MarketState(S={:?}, I={:?}, P={:?}, N={:?})",
            x.s, x.i, x.p, x.n
        )
    }
}

/// Initial state, horizon and integrator settings.
#[pyclass(name = "Scenario", module = "sipns", skip_from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: sipns_core::Scenario,
}

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (initial=None, horizon=100.0, rel_tol=1e-8, abs_tol=1e-10, max_steps=1_000_000))]
    fn new(
        initial: Option<PyRef<'_, PyMarketState>>,
        horizon: f64,
        rel_tol: f64,
        abs_tol: f64,
        max_steps: usize,
    ) -> PyResult<Self> {
        let mut inner = sipns_core::Scenario::default()
            .with_horizon(horizon)
            .with_tolerances(rel_tol, abs_tol);
        if let Some(x) = initial {
            inner = inner.with_initial(x.inner);
        }
        inner.max_steps = max_steps;
        inner.validate().map_err(to_py_err)?;
        Ok(PyScenario { inner })
    }

    #[getter]
    fn initial(&self) -> PyMarketState {
        PyMarketState {
            inner: self.inner.initial,
        }
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "Scenario(initial={:?}, horizon={:?}, rel_tol={:?}, abs_tol={:?}, max_steps={})",
            s.initial.to_array(),
            s.horizon,
            s.rel_tol,
            s.abs_tol,
            s.max_steps
        )
    }
}

fn scenario_or_default(scenario: Option<PyRef<'_, PyScenario>>) -> sipns_core::Scenario {
    scenario.map(|s| s.inner).unwrap_or_default()
}

/// `[dS, dI, dP, dN]` at `state`.
#[pyfunction]
fn vector_field(
    params: PyRef<'_, PyModelParams>,
    state: PyRef<'_, PyMarketState>,
) -> PyResult<Vec<f64>> {
    Ok(sipns_core::vector_field(&params.inner, &state.inner)
        .map_err(to_py_err)?
        .to_array()
        .to_vec())
}

#[pyfunction]
fn equilibrium(params: PyRef<'_, PyModelParams>) -> PyResult<PyMarketState> {
    let inner = sipns_core::equilibrium(&params.inner).map_err(to_py_err)?;
    Ok(PyMarketState { inner })
}

#[pyfunction]
fn jacobian(params: PyRef<'_, PyModelParams>, state: PyRef<'_, PyMarketState>) -> Vec<Vec<f64>> {
    sipns_core::jacobian(&params.inner, &state.inner)
        .iter()
        .map(|row| row.to_vec())
        .collect()
}

/// Trajectory as a dict of columns `t, S, I, P, N, J`, sampled at `samples`
/// evenly spaced interior times plus both endpoints.
#[pyfunction]
#[pyo3(signature = (params, scenario=None, samples=500))]
fn integrate<'py>(
    py: Python<'py>,
    params: PyRef<'_, PyModelParams>,
    scenario: Option<PyRef<'_, PyScenario>>,
    samples: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let scenario = scenario_or_default(scenario);
    let grid = solver::interior_grid(scenario.horizon, samples);
    let base = params.inner;
    let traj = py
        .detach(|| solver::integrate(&base, &scenario, Some(&grid)))
        .map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("t", &traj.times)?;
    for (k, name) in sipns_core::model::COMPONENTS.iter().enumerate() {
        let column: Vec<f64> = traj.states.iter().map(|x| x.to_array()[k]).collect();
        out.set_item(*name, column)?;
    }
    out.set_item("J", &traj.profit_running)?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (params, scenario=None))]
fn profit(
    py: Python<'_>,
    params: PyRef<'_, PyModelParams>,
    scenario: Option<PyRef<'_, PyScenario>>,
) -> PyResult<f64> {
    let scenario = scenario_or_default(scenario);
    let base = params.inner;
    py.detach(|| solver::profit(&base, &scenario))
        .map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (params, scenario=None))]
fn steady_state<'py>(
    py: Python<'py>,
    params: PyRef<'_, PyModelParams>,
    scenario: Option<PyRef<'_, PyScenario>>,
) -> PyResult<Bound<'py, PyAny>> {
    let scenario = scenario_or_default(scenario);
    let base = params.inner;
    let result = py
        .detach(|| analysis::steady_state(&base, &scenario))
        .map_err(to_py_err)?;
    to_py(py, &result)
}

/// Sweeps one rate over `grid` (default: 9 points over a decade centred on
/// the current value) and adds the expected-direction checks.
#[pyfunction]
#[pyo3(signature = (params, parameter, grid=None, scenario=None))]
fn sweep<'py>(
    py: Python<'py>,
    params: PyRef<'_, PyModelParams>,
    parameter: &str,
    grid: Option<Vec<f64>>,
    scenario: Option<PyRef<'_, PyScenario>>,
) -> PyResult<Bound<'py, PyAny>> {
    let name = param_name(parameter)?;
    let scenario = scenario_or_default(scenario);
    let grid = grid.unwrap_or_else(|| analysis::decade_grid(params.inner.get(name), 9));
    let base = params.inner;
    let report = py
        .detach(|| analysis::sweep(&base, name, &grid, &scenario))
        .map_err(to_py_err)?;
    let checks = analysis::monotonicity_check(&report, &analysis::expected_directions(name));
    let out = to_py(py, &report)?;
    out.set_item("checks", to_py(py, &checks)?)?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (params, lower, upper, scenario=None, points=analysis::THRESHOLD_GRID_POINTS))]
fn threshold_search<'py>(
    py: Python<'py>,
    params: PyRef<'_, PyModelParams>,
    lower: f64,
    upper: f64,
    scenario: Option<PyRef<'_, PyScenario>>,
    points: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let scenario = scenario_or_default(scenario);
    let base = params.inner;
    let report = py
        .detach(|| analysis::threshold_search_points(&base, &scenario, lower, upper, points))
        .map_err(to_py_err)?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (params, scenario=None))]
fn sensitivity<'py>(
    py: Python<'py>,
    params: PyRef<'_, PyModelParams>,
    scenario: Option<PyRef<'_, PyScenario>>,
) -> PyResult<Bound<'py, PyAny>> {
    let scenario = scenario_or_default(scenario);
    let base = params.inner;
    let entries = py
        .detach(|| optimize::sensitivity(&base, &scenario))
        .map_err(to_py_err)?;
    to_py(py, &entries)
}

/// Maximizes profit over `controls`, a list of `(name, lower, upper)`;
/// the other rates stay at `params`.
#[pyfunction]
#[pyo3(signature = (params, controls, scenario=None, starts=optimize::DEFAULT_STARTS, seed=0))]
fn maximize_profit<'py>(
    py: Python<'py>,
    params: PyRef<'_, PyModelParams>,
    controls: Vec<(String, f64, f64)>,
    scenario: Option<PyRef<'_, PyScenario>>,
    starts: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let scenario = scenario_or_default(scenario);
    let controls = controls
        .into_iter()
        .map(|(name, lower, upper)| {
            Ok(ControlBound {
                parameter: param_name(&name)?,
                lower,
                upper,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let spec = ControlSpec::new(params.inner, controls);
    let result = py
        .detach(|| optimize::maximize_profit(&spec, &scenario, starts, seed))
        .map_err(to_py_err)?;
    to_py(py, &result)
}

#[pymodule]
fn sipns(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", sipns_core::VERSION)?;
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyMarketState>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(vector_field, m)?)?;
    m.add_function(wrap_pyfunction!(equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(jacobian, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(profit, m)?)?;
    m.add_function(wrap_pyfunction!(steady_state, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_search, m)?)?;
    m.add_function(wrap_pyfunction!(sensitivity, m)?)?;
    m.add_function(wrap_pyfunction!(maximize_profit, m)?)?;
    Ok(())
}
