//! Python bindings: pressure laws, run configurations, single runs and
//! sweeps.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use congestion::diagnostics::DiagnosticsRecord;
use congestion::domain::vacuum_threshold;
use congestion::pressure::{PressureLaw, PressureModel};
use congestion::runner::{self, parse_config_with, parse_override, serialize_config, RunConfig as CoreConfig};
use congestion::Error;

create_exception!(congestion_py, SolverError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ if e.exit_code() == 2 => PyValueError::new_err(e.to_string()),
        _ => SolverError::new_err(e.to_string()),
    }
}

fn to_python<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A congestion pressure law `π(r)` with its potentials `Γ` and `Q`.
#[pyclass(name = "PressureLaw", module = "congestion_py", frozen)]
struct PyPressureLaw {
    model: PressureModel,
}

impl PyPressureLaw {
    fn build(law: PressureLaw) -> PyResult<Self> {
        Ok(Self {
            model: PressureModel::new(law).map_err(to_py)?,
        })
    }
}

#[pymethods]
impl PyPressureLaw {
    #[staticmethod]
    fn singular(eps: f64, alpha: f64, beta: f64) -> PyResult<Self> {
        Self::build(PressureLaw::Singular { eps, alpha, beta })
    }

    #[staticmethod]
    fn barotropic(a: f64, gamma_n: f64) -> PyResult<Self> {
        Self::build(PressureLaw::Barotropic { a, gamma_n })
    }

    #[staticmethod]
    #[pyo3(signature = (eps, alpha, beta, kappa, cap_k, delta))]
    fn truncated(eps: f64, alpha: f64, beta: f64, kappa: f64, cap_k: f64, delta: f64) -> PyResult<Self> {
        Self::build(PressureLaw::Truncated {
            eps,
            alpha,
            beta,
            kappa,
            cap_k,
            delta,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (c0, s_exp, phi_star = 0.64))]
    fn sedimentation(c0: f64, s_exp: f64, phi_star: f64) -> PyResult<Self> {
        Self::build(PressureLaw::Sedimentation { c0, s_exp, phi_star })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.model.law().kind()
    }

    #[getter]
    fn has_barrier(&self) -> bool {
        self.model.law().has_barrier()
    }

    fn pi(&self, r: f64) -> PyResult<f64> {
        self.model.pi(r).map_err(to_py)
    }

    fn dpi(&self, r: f64) -> PyResult<f64> {
        self.model.dpi(r).map_err(to_py)
    }

    fn gamma(&self, r: f64) -> PyResult<f64> {
        self.model.gamma(r).map_err(to_py)
    }

    fn q(&self, r: f64) -> PyResult<f64> {
        self.model.q(r).map_err(to_py)
    }

    fn warnings(&self) -> Vec<String> {
        self.model.law().warnings()
    }

    fn __repr__(&self) -> String {
        format!("PressureLaw({:?})", self.model.law())
    }
}

/// A validated run configuration.
#[pyclass(name = "RunConfig", module = "congestion_py", frozen)]
struct PyRunConfig {
    inner: CoreConfig,
}

fn overrides(items: Vec<String>) -> PyResult<Vec<(String, String)>> {
    items.iter().map(|s| parse_override(s).map_err(to_py)).collect()
}

#[pymethods]
impl PyRunConfig {
    /// Configuration of a built-in scenario, with optional `key=value`
    /// overrides.
    #[staticmethod]
    #[pyo3(signature = (name, overrides = Vec::new()))]
    fn scenario(name: &str, overrides: Vec<String>) -> PyResult<Self> {
        let text = format!("scenario = {}\n", toml_string(name));
        Self::from_toml(&text, overrides)
    }

    /// Parses and validates TOML text.
    #[staticmethod]
    #[pyo3(signature = (text, overrides = Vec::new()))]
    fn from_toml(text: &str, overrides: Vec<String>) -> PyResult<Self> {
        let ov = self::overrides(overrides)?;
        Ok(Self {
            inner: parse_config_with(text, &ov).map_err(to_py)?,
        })
    }

    /// A copy with `key=value` overrides applied.
    fn with_overrides(&self, overrides: Vec<String>) -> PyResult<Self> {
        Self::from_toml(&serialize_config(&self.inner), overrides)
    }

    fn to_toml(&self) -> String {
        serialize_config(&self.inner)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &self.inner)
    }

    #[getter]
    fn scenario_name(&self) -> Option<String> {
        self.inner.scenario.clone()
    }

    #[getter]
    fn t_end(&self) -> f64 {
        self.inner.solver.t_end
    }

    fn __repr__(&self) -> String {
        format!(
            "RunConfig(scenario={:?}, t_end={})",
            self.inner.scenario, self.inner.solver.t_end
        )
    }
}

fn toml_string(s: &str) -> String {
    format!("{:?}", s)
}

/// Outcome of an in-memory run.
#[pyclass(name = "RunResult", module = "congestion_py", frozen)]
struct PyRunResult {
    out: runner::RunOutput,
    vacuum: f64,
}

#[pymethods]
impl PyRunResult {
    #[getter]
    fn ok(&self) -> bool {
        self.out.summary.ok
    }

    #[getter]
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &self.out.summary)
    }

    /// Diagnostics as a mapping from column name to list of values, in CSV
    /// column order.
    #[getter]
    fn diagnostics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let rows: Vec<serde_json::Value> = self
            .out
            .records
            .iter()
            .map(serde_json::to_value)
            .collect::<Result<_, _>>()
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let cols = PyDict::new(py);
        for name in DiagnosticsRecord::COLUMNS {
            let col: Vec<f64> = rows.iter().map(|r| r[name].as_f64().unwrap_or(f64::NAN)).collect();
            cols.set_item(name, col)?;
        }
        Ok(cols)
    }

    /// Final `(density, velocity_x, velocity_y)` over interior cells,
    /// row-major; `None` if the run failed.
    fn final_fields(&self) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        self.out.final_state.as_ref().map(|s| {
            (
                s.density(),
                s.velocity(0, self.vacuum),
                s.velocity(1, self.vacuum),
            )
        })
    }

    fn __repr__(&self) -> String {
        let s = &self.out.summary;
        format!("RunResult(ok={}, t={}, steps={})", s.ok, s.final_t, s.steps)
    }
}

/// Names of the built-in scenarios.
#[pyfunction]
fn scenarios() -> Vec<&'static str> {
    congestion::scenarios::SCENARIOS.to_vec()
}

/// Runs without writing files. Solver failures are reported through
/// `RunResult.ok` and the summary.
#[pyfunction]
fn run(py: Python<'_>, config: &PyRunConfig) -> PyResult<PyRunResult> {
    let cfg = config.inner.clone();
    let (out, vacuum) = py
        .detach(move || -> congestion::Result<_> {
            let prep = runner::Prepared::new(&cfg)?;
            let vac = vacuum_threshold(&prep.barrier);
            Ok((runner::run_in_memory(&cfg)?, vac))
        })
        .map_err(to_py)?;
    Ok(PyRunResult { out, vacuum })
}

/// Runs and writes `diagnostics.csv`, `snapshots/` and `meta.json` into
/// `out_dir`; returns the summary. Raises `SolverError` on solver failure.
#[pyfunction]
fn run_to_dir<'py>(py: Python<'py>, config: &PyRunConfig, out_dir: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config.inner.clone();
    let summary = py.detach(move || runner::run_once(&cfg, &out_dir)).map_err(to_py)?;
    to_python(py, &summary)
}

/// Runs the configuration's sweep plan; writes artifacts when `out_dir`
/// is given. Returns `{"rows": [...], "checks": {...}}`.
#[pyfunction]
#[pyo3(signature = (config, out_dir = None))]
fn sweep<'py>(py: Python<'py>, config: &PyRunConfig, out_dir: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config.inner.clone();
    let result = py
        .detach(move || runner::run_sweep(&cfg, out_dir.as_deref()))
        .map_err(to_py)?;
    to_python(py, &result)
}

/// `(L1 density error, L1 momentum error)` of a manufactured-solution run.
#[pyfunction]
fn manufactured_errors(py: Python<'_>, config: &PyRunConfig) -> PyResult<(f64, f64)> {
    let cfg = config.inner.clone();
    let e = py.detach(move || runner::manufactured_errors(&cfg)).map_err(to_py)?;
    Ok((e.l1_rho, e.l1_mom))
}

/// L¹ gap between the transported ratio and `ρ/ρ*` at the final time.
#[pyfunction]
fn ratio_equation_gap(py: Python<'_>, config: &PyRunConfig) -> PyResult<f64> {
    let cfg = config.inner.clone();
    py.detach(move || runner::ratio_equation_gap(&cfg)).map_err(to_py)
}

#[pymodule]
fn congestion_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    m.add_class::<PyPressureLaw>()?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_to_dir, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(manufactured_errors, m)?)?;
    m.add_function(wrap_pyfunction!(ratio_equation_gap, m)?)?;
    Ok(())
}
