//! Python bindings: load models, schedule counting, forecasts, metrics and
//! end-to-end scenario runs.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use loadsched::forecast::{clear_sky as core_clear_sky, persistence_forecast, ClearSkyProfile, PowerSeries};
use loadsched::scenario::{run_scenario as core_run, ScenarioConfig};
use loadsched::{DwellConstraint, DwellRounding, EndRule, LoadState};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn end_rule(name: &str) -> PyResult<EndRule> {
    match name {
        "strict" => Ok(EndRule::Strict),
        "extendable" => Ok(EndRule::Extendable),
        other => Err(PyValueError::new_err(format!("unknown end rule `{other}`"))),
    }
}

fn rounding(name: &str) -> PyResult<DwellRounding> {
    match name {
        "exact" => Ok(DwellRounding::Exact),
        "up" => Ok(DwellRounding::Up),
        other => Err(PyValueError::new_err(format!("unknown dwell rounding `{other}`"))),
    }
}

/// A switchable first-order load. Times in seconds.
#[pyclass(name = "LoadSpec", from_py_object)]
#[derive(Clone)]
struct PyLoadSpec {
    inner: loadsched::LoadSpec,
}

#[pymethods]
impl PyLoadSpec {
    #[new]
    #[pyo3(signature = (id, rated_power, tau_on, tau_off, min_on, min_off, p_off = 0.0))]
    fn new(id: String, rated_power: f64, tau_on: f64, tau_off: f64, min_on: f64, min_off: f64, p_off: f64) -> PyResult<Self> {
        let mut inner = loadsched::LoadSpec::new(id, rated_power, tau_on, tau_off, min_on, min_off);
        inner.p_off = p_off;
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    /// The three-load reference fleet.
    #[staticmethod]
    fn reference_fleet() -> Vec<Self> {
        loadsched::LoadSpec::reference_fleet()
            .into_iter()
            .map(|inner| Self { inner })
            .collect()
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn rated_power(&self) -> f64 {
        self.inner.rated_power
    }

    #[getter]
    fn min_on(&self) -> f64 {
        self.inner.min_on
    }

    #[getter]
    fn min_off(&self) -> f64 {
        self.inner.min_off
    }

    /// Zero-order-hold coefficients at step `dt`.
    #[pyo3(signature = (dt, dwell_rounding = "exact"))]
    fn discretize<'py>(&self, py: Python<'py>, dt: f64, dwell_rounding: &str) -> PyResult<Bound<'py, PyDict>> {
        let d = loadsched::discretize_with(&self.inner, dt, rounding(dwell_rounding)?).map_err(value_err)?;
        let out = PyDict::new(py);
        out.set_item("a_on", d.a_on)?;
        out.set_item("b_on", d.b_on)?;
        out.set_item("a_off", d.a_off)?;
        out.set_item("b_off", d.b_off)?;
        out.set_item("n_on", d.n_on)?;
        out.set_item("n_off", d.n_off)?;
        Ok(out)
    }

    /// Power after each sample of `commands`, starting from `p0` with the load off.
    #[pyo3(signature = (dt, commands, p0 = 0.0))]
    fn simulate(&self, dt: f64, commands: Vec<bool>, p0: f64) -> PyResult<Vec<f64>> {
        let d = loadsched::discretize_with(&self.inner, dt, DwellRounding::Up).map_err(value_err)?;
        let init = LoadState { power: p0, on: false, dwell: usize::MAX };
        Ok(loadsched::loads::simulate_load(&d, commands, 1, init).0)
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "LoadSpec(id={:?}, rated_power={}, tau_on={}, tau_off={}, min_on={}, min_off={}, p_off={})",
            s.id, s.rated_power, s.tau_on, s.tau_off, s.min_on, s.min_off, s.p_off
        )
    }
}

fn constraint(n_on: usize, n_off: usize, horizon: usize, rule: &str, first_step_fixed: bool) -> PyResult<DwellConstraint> {
    let c = DwellConstraint::new(n_on, n_off, horizon, end_rule(rule)?).with_first_step_fixed(first_step_fixed);
    c.validate().map_err(value_err)?;
    Ok(c)
}

fn init_state(init_on: bool, init_dwell: Option<usize>) -> LoadState {
    LoadState {
        power: 0.0,
        on: init_on,
        dwell: init_dwell.unwrap_or(usize::MAX),
    }
}

/// Number of admissible rows for one load; dwell lengths in samples.
#[pyfunction]
#[pyo3(signature = (n_on, n_off, horizon, end_rule = "strict", first_step_fixed = false, init_on = false, init_dwell = None))]
fn count_admissible(
    n_on: usize,
    n_off: usize,
    horizon: usize,
    end_rule: &str,
    first_step_fixed: bool,
    init_on: bool,
    init_dwell: Option<usize>,
) -> PyResult<u64> {
    let c = constraint(n_on, n_off, horizon, end_rule, first_step_fixed)?;
    Ok(loadsched::count_admissible(&c, &init_state(init_on, init_dwell)))
}

/// Admissible rows as `"0110"` strings in increasing binary order.
#[pyfunction]
#[pyo3(signature = (n_on, n_off, horizon, end_rule = "strict", first_step_fixed = false, init_on = false, init_dwell = None))]
fn enumerate_rows(
    n_on: usize,
    n_off: usize,
    horizon: usize,
    end_rule: &str,
    first_step_fixed: bool,
    init_on: bool,
    init_dwell: Option<usize>,
) -> PyResult<Vec<String>> {
    let c = constraint(n_on, n_off, horizon, end_rule, first_step_fixed)?;
    Ok(loadsched::enumerate_rows(&c, &init_state(init_on, init_dwell))
        .map(|r| r.to_string())
        .collect())
}

/// Half-sine clear-sky power sampled at `t0 + k * dt`.
#[pyfunction]
fn clear_sky(p_peak: f64, t_rise: i64, t_set: i64, t0: i64, dt: i64, count: usize) -> PyResult<Vec<f64>> {
    let profile = ClearSkyProfile {
        p_peak,
        t_rise,
        t_set,
        shape: Default::default(),
    };
    Ok(core_clear_sky(&profile, t0, dt, count).map_err(value_err)?.values)
}

/// Persistence window issued at `issue` from series sharing the grid `(t0, dt)`.
#[pyfunction]
#[pyo3(signature = (measured, clearsky, t0, dt, issue, horizon, guard = 0.01))]
fn persistence(
    measured: Vec<f64>,
    clearsky: Vec<f64>,
    t0: i64,
    dt: i64,
    issue: i64,
    horizon: usize,
    guard: f64,
) -> PyResult<Vec<f64>> {
    let m = PowerSeries::new(t0, dt, measured).map_err(value_err)?;
    let c = PowerSeries::new(t0, dt, clearsky).map_err(value_err)?;
    persistence_forecast(&m, &c, issue, horizon, guard).map_err(value_err)
}

fn series_pair(actual: Vec<f64>, demand: Vec<f64>, dt: i64) -> PyResult<(PowerSeries, PowerSeries)> {
    Ok((
        PowerSeries::new(0, dt, actual).map_err(value_err)?,
        PowerSeries::new(0, dt, demand).map_err(value_err)?,
    ))
}

/// Exceedance events of `demand` over `actual`; energies in power x seconds.
#[pyfunction]
#[pyo3(signature = (actual, demand, dt, tol = 0.0))]
fn exceedance<'py>(py: Python<'py>, actual: Vec<f64>, demand: Vec<f64>, dt: i64, tol: f64) -> PyResult<Bound<'py, PyDict>> {
    let (a, d) = series_pair(actual, demand, dt)?;
    let r = loadsched::exceedance(&a, &d, tol).map_err(value_err)?;
    let out = PyDict::new(py);
    let events: Vec<(i64, i64, f64, f64)> = r.events.iter().map(|e| (e.start, e.end, e.peak_pe, e.ee)).collect();
    out.set_item("events", events)?;
    out.set_item("total_ee", r.total_ee)?;
    out.set_item("max_event_ee", r.max_event_ee)?;
    out.set_item("violation_steps", r.violation_steps)?;
    Ok(out)
}

/// Served fraction of available energy.
#[pyfunction]
fn efficiency(actual: Vec<f64>, demand: Vec<f64>) -> PyResult<f64> {
    let (a, d) = series_pair(actual, demand, 1)?;
    loadsched::efficiency(&a, &d).map_err(value_err)
}

/// Runs a scenario given as TOML text; relative paths resolve against `base_dir`.
#[pyfunction]
#[pyo3(signature = (config, base_dir = None))]
fn run_scenario<'py>(py: Python<'py>, config: &str, base_dir: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = ScenarioConfig::from_toml(config).map_err(value_err)?;
    if let Some(dir) = base_dir {
        cfg.resolve_paths(std::path::Path::new(dir));
    }
    let out = py.detach(|| core_run(&cfg)).map_err(value_err)?;
    let summary = PyDict::new(py);
    for (k, v) in summary_items(&out.summary) {
        summary.set_item(k, v.into_pyobject(py)?)?;
    }
    let result = PyDict::new(py);
    let traj = &out.trajectory;
    result.set_item("summary", summary)?;
    result.set_item("time", (0..traj.len()).map(|s| traj.time(s)).collect::<Vec<_>>())?;
    result.set_item("actual", traj.actual.clone())?;
    result.set_item("demand", traj.demand.clone())?;
    result.set_item("load_power", traj.load_power.clone())?;
    result.set_item("commands", traj.commands.clone())?;
    Ok(result)
}

enum Scalar {
    Int(i64),
    Float(f64),
    Str(String),
}

impl<'py> IntoPyObject<'py> for Scalar {
    type Target = PyAny;
    type Output = Bound<'py, PyAny>;
    type Error = PyErr;

    fn into_pyobject(self, py: Python<'py>) -> Result<Self::Output, Self::Error> {
        Ok(match self {
            Scalar::Int(v) => v.into_pyobject(py)?.into_any(),
            Scalar::Float(v) => v.into_pyobject(py)?.into_any(),
            Scalar::Str(v) => v.into_pyobject(py)?.into_any(),
        })
    }
}

fn summary_items(summary: &loadsched::Summary) -> Vec<(&'static str, Scalar)> {
    use Scalar::*;
    vec![
        ("scenario", Str(summary.scenario.clone())),
        ("power_unit", Str(summary.power_unit.clone())),
        ("loads", Int(summary.loads as i64)),
        ("dt", Int(summary.dt)),
        ("decision_interval", Int(summary.decision_interval)),
        ("horizon_seconds", Int(summary.horizon_seconds)),
        ("horizon_decisions", Int(summary.horizon_decisions as i64)),
        ("horizon_samples", Int(summary.horizon_samples as i64)),
        ("start", Int(summary.start)),
        ("end", Int(summary.end)),
        ("decision_steps", Int(summary.decision_steps as i64)),
        ("samples", Int(summary.samples as i64)),
        ("efficiency", Float(summary.efficiency)),
        ("total_ee", Float(summary.total_ee)),
        ("max_event_ee", Float(summary.max_event_ee)),
        ("violation_events", Int(summary.violation_events as i64)),
        ("violation_steps", Int(summary.violation_steps as i64)),
        ("infeasible_steps", Int(summary.infeasible_steps as i64)),
        ("candidates_min", Int(summary.candidates_min as i64)),
        ("candidates_mean", Float(summary.candidates_mean)),
        ("candidates_max", Int(summary.candidates_max as i64)),
        ("battery_largest_unit_rule", Float(summary.battery_largest_unit_rule)),
    ]
}

#[pymodule]
fn pyloadsched(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLoadSpec>()?;
    m.add_function(wrap_pyfunction!(count_admissible, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_rows, m)?)?;
    m.add_function(wrap_pyfunction!(clear_sky, m)?)?;
    m.add_function(wrap_pyfunction!(persistence, m)?)?;
    m.add_function(wrap_pyfunction!(exceedance, m)?)?;
    m.add_function(wrap_pyfunction!(efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
