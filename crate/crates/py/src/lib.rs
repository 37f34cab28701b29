//! Python bindings for the screening library.

use ffr_core::linearizer::closed_loop_of;
use ffr_core::reproduce::closed_with;
use ffr_core::{self as core, FrequencyGrid};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: core::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

#[pyclass(name = "Scenario", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: core::Scenario,
}

#[pymethods]
impl PyScenario {
    /// Reads a scenario file; a bare bundled name also works.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        core::load_scenario(path).map(|inner| PyScenario { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn parse(source: &str) -> PyResult<Self> {
        core::parse_scenario(source).map(|inner| PyScenario { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn bundled(name: &str) -> PyResult<Self> {
        core::scenario::bundled(name).map(|inner| PyScenario { inner }).map_err(py_err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.system.name.clone()
    }

    #[getter]
    fn n_buses(&self) -> usize {
        self.inner.n_buses()
    }

    /// Σ kinetic energy over buses, GWs.
    #[getter]
    fn total_kinetic_energy(&self) -> f64 {
        self.inner.total_kinetic_energy()
    }

    #[getter]
    fn ibr_buses(&self) -> Vec<usize> {
        self.inner.ibr.iter().map(|c| c.bus).collect()
    }

    /// All IBR droop moved to one bus.
    fn with_ibr_at(&self, bus: usize) -> PyResult<Self> {
        let inner = self.inner.with_ibr_at(bus);
        inner.validate().map_err(py_err)?;
        Ok(PyScenario { inner })
    }

    fn with_zero_ibr(&self) -> Self {
        PyScenario {
            inner: self.inner.with_zero_ibr(),
        }
    }

    /// Sets the droop gain of the controller at `bus`, adding one if absent.
    fn with_ibr_gain(&self, bus: usize, gain: f64) -> PyResult<Self> {
        let mut inner = self.inner.clone();
        inner.ibr = core::modal::with_bus_gain(&inner, bus, gain).map_err(py_err)?;
        inner.validate().map_err(py_err)?;
        Ok(PyScenario { inner })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn __repr__(&self) -> String {
        format!("Scenario({:?}, {} buses)", self.inner.system.name, self.inner.n_buses())
    }
}

#[pyclass(get_all, frozen)]
struct Simulation {
    t: Vec<f64>,
    f_coi: Vec<f64>,
    nadir_hz: f64,
    nadir_time_s: f64,
    rocof_hz_s: f64,
    initial_rocof_hz_s: f64,
    steady_state_hz: f64,
    oscillation_hz: Option<f64>,
    oscillation_kind: Option<String>,
    oracle_error: f64,
}

#[pyclass(get_all, frozen)]
struct RatioCurve {
    bus: usize,
    omega: Vec<f64>,
    magnitude: Vec<f64>,
    crossover_rad_s: Option<f64>,
    peak_rad_s: f64,
    peak: f64,
    identity_error: f64,
}

#[pyclass(get_all, frozen)]
struct Modes {
    /// `(re, im, zeta, freq_hz, is_reference)` per eigenvalue.
    modes: Vec<(f64, f64, f64, f64, bool)>,
    stable: bool,
    min_zeta: f64,
    max_residual: f64,
}

#[pyclass(get_all, frozen)]
struct Allocation {
    candidates: Vec<usize>,
    shares: Vec<f64>,
    peaks_before: Vec<f64>,
    peaks_after: Vec<f64>,
    min_zeta_before: f64,
    min_zeta_after: f64,
    converged: bool,
    iterations: usize,
    infeasible: bool,
}

#[pyfunction]
#[pyo3(signature = (scenario, horizon_s=None, dt_s=None))]
fn simulate(scenario: &PyScenario, horizon_s: Option<f64>, dt_s: Option<f64>) -> PyResult<Simulation> {
    let s = &scenario.inner;
    let cl = closed_loop_of(s).map_err(py_err)?;
    let tr = core::step_response(&cl, &s.disturbances, horizon_s.unwrap_or(s.study.horizon_s), dt_s.unwrap_or(s.study.dt_s))
        .map_err(py_err)?;
    let mt = core::metrics(&tr, s.system.f0_hz).map_err(py_err)?;
    Ok(Simulation {
        nadir_hz: mt.nadir_hz,
        nadir_time_s: mt.nadir_time_s,
        rocof_hz_s: mt.rocof_hz_s,
        initial_rocof_hz_s: mt.initial_rocof_hz_s,
        steady_state_hz: mt.steady_state_hz,
        oscillation_hz: mt.oscillation.map(|o| o.frequency_hz),
        oscillation_kind: mt.oscillation.map(|o| o.kind.name().to_string()),
        oracle_error: tr.oracle_error,
        t: tr.t,
        f_coi: tr.f_coi,
    })
}

/// Per-controller disturbance response ratios over the scenario's grid.
#[pyfunction]
#[pyo3(signature = (scenario, points_per_decade=None))]
fn response_ratio(scenario: &PyScenario, points_per_decade: Option<usize>) -> PyResult<Vec<RatioCurve>> {
    let s = &scenario.inner;
    let mut grid = FrequencyGrid::from_scenario(s);
    if let Some(p) = points_per_decade {
        grid = FrequencyGrid::new(grid.omega_min, grid.omega_max, p).map_err(py_err)?;
    }
    let dbus = s
        .disturbances
        .first()
        .ok_or_else(|| PyValueError::new_err("scenario has no disturbance"))?
        .bus;
    let (m, cl) = closed_with(s, &s.ibr).map_err(py_err)?;
    let curves = core::disturbance_response_ratio(&m, &cl, &[], dbus, &grid.points()).map_err(py_err)?;
    Ok(curves
        .into_iter()
        .map(|c| {
            let (wp, pk) = core::peak(&c.ratio);
            RatioCurve {
                bus: c.bus,
                magnitude: c.ratio.magnitudes(),
                crossover_rad_s: core::crossover_frequency(&c.ratio),
                peak_rad_s: wp,
                peak: pk,
                identity_error: c.identity_error(),
                omega: c.ratio.omega,
            }
        })
        .collect())
}

#[pyfunction]
#[pyo3(signature = (scenario, open_loop=false))]
fn modes(scenario: &PyScenario, open_loop: bool) -> PyResult<Modes> {
    let s = &scenario.inner;
    let (m, cl) = closed_with(s, &s.ibr).map_err(py_err)?;
    let ms = core::eigenvalues(if open_loop { &m.a } else { &cl.a_cl }).map_err(py_err)?;
    Ok(Modes {
        modes: ms
            .modes
            .iter()
            .map(|m| (m.lambda.re, m.lambda.im, m.zeta, m.freq_hz, m.is_reference))
            .collect(),
        stable: ms.stable,
        min_zeta: ms.min_zeta(),
        max_residual: ms.max_residual,
    })
}

/// Minimum damping per gain at `bus` and the critical gain, if crossed.
#[pyfunction]
fn damping_sweep(scenario: &PyScenario, bus: usize, gains: Vec<f64>) -> PyResult<(Vec<f64>, Option<f64>)> {
    let r = core::damping_sweep(&scenario.inner, bus, &gains).map_err(py_err)?;
    Ok((r.min_zeta, r.critical_gain))
}

#[pyfunction]
#[pyo3(signature = (scenario, cap=None))]
fn allocate(scenario: &PyScenario, cap: Option<f64>) -> PyResult<Allocation> {
    let mut p = core::AllocationProblem::from_scenario(&scenario.inner).map_err(py_err)?;
    if let Some(c) = cap {
        p.cap = c;
    }
    let r = core::allocate_droop(&p).map_err(py_err)?;
    Ok(Allocation {
        candidates: r.candidates,
        shares: r.shares,
        peaks_before: r.peaks_before,
        peaks_after: r.peaks_after,
        min_zeta_before: r.min_zeta_before,
        min_zeta_after: r.min_zeta_after,
        converged: r.converged,
        iterations: r.iterations,
        infeasible: r.infeasible,
    })
}

#[pyfunction]
fn bundled_names() -> Vec<&'static str> {
    core::scenario::bundled_names()
}

#[pymodule]
fn ffr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<Simulation>()?;
    m.add_class::<RatioCurve>()?;
    m.add_class::<Modes>()?;
    m.add_class::<Allocation>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(response_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(modes, m)?)?;
    m.add_function(wrap_pyfunction!(damping_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(allocate, m)?)?;
    m.add_function(wrap_pyfunction!(bundled_names, m)?)?;
    Ok(())
}
