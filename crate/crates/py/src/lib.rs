//! Python bindings: configuration, plant, identification, tube design and
//! closed-loop runs. Vectors cross the boundary as lists of floats.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use piml_tube::harness::{self, ControllerKind, ExperimentConfig, FlightData, TrajectoryKind};
use piml_tube::ident::{self, Term};
use piml_tube::quadsim::{plant_step, DrydenConfig, DrydenState, QuadParams};
use piml_tube::{model_file, Input, State, NU, NX};

fn err(e: piml_tube::Error) -> PyErr {
    match e {
        piml_tube::Error::Config(_) | piml_tube::Error::InvalidParameter { .. } | piml_tube::Error::ModelFile { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn state(v: &[f64]) -> PyResult<State> {
    if v.len() != NX {
        return Err(PyValueError::new_err(format!("state needs {NX} values, got {}", v.len())));
    }
    Ok(State::from_column_slice(v))
}

fn input(v: &[f64]) -> PyResult<Input> {
    if v.len() != NU {
        return Err(PyValueError::new_err(format!("input needs {NU} values, got {}", v.len())));
    }
    Ok(Input::from_column_slice(v))
}

fn parse<T: std::str::FromStr<Err = piml_tube::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

/// Experiment configuration; every field has a default.
#[pyclass(name = "Config", module = "piml_tube", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self {
            inner: ExperimentConfig::default(),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ExperimentConfig::from_toml(text).map_err(err)?,
        })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(err)
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration
    }

    #[setter]
    fn set_duration(&mut self, v: f64) {
        self.inner.duration = v;
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn seeds(&self) -> Vec<u64> {
        self.inner.seeds.clone()
    }

    #[setter]
    fn set_seeds(&mut self, v: Vec<u64>) {
        self.inner.seeds = v;
    }

    #[getter]
    fn controllers(&self) -> Vec<String> {
        self.inner.controllers.iter().map(|c| c.to_string()).collect()
    }

    #[setter]
    fn set_controllers(&mut self, v: Vec<String>) -> PyResult<()> {
        self.inner.controllers = v.iter().map(|s| parse::<ControllerKind>(s)).collect::<PyResult<_>>()?;
        Ok(())
    }

    #[getter]
    fn trajectories(&self) -> Vec<String> {
        self.inner.trajectories.iter().map(|t| t.to_string()).collect()
    }

    #[setter]
    fn set_trajectories(&mut self, v: Vec<String>) -> PyResult<()> {
        self.inner.trajectories = v.iter().map(|s| parse::<TrajectoryKind>(s)).collect::<PyResult<_>>()?;
        Ok(())
    }

    #[getter]
    fn wind_intensity(&self) -> f64 {
        self.inner.wind.intensity
    }

    #[setter]
    fn set_wind_intensity(&mut self, v: f64) {
        self.inner.wind.intensity = v;
    }

    #[getter]
    fn learning(&self) -> bool {
        self.inner.learning
    }

    #[setter]
    fn set_learning(&mut self, v: bool) {
        self.inner.learning = v;
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(duration={}, dt={}, seeds={:?}, controllers={:?})",
            self.inner.duration,
            self.inner.dt,
            self.inner.seeds,
            self.controllers()
        )
    }
}

/// Sparse residual model `Ψ(x, u) ξ` over a list of library terms.
#[pyclass(name = "LearnedModel", module = "piml_tube", from_py_object)]
#[derive(Clone)]
struct PyLearnedModel {
    inner: ident::LearnedModel,
}

#[pymethods]
impl PyLearnedModel {
    /// `terms` use the text form (`"x4"`, `"sin(x7)*u1"`, ...); `xi` has one
    /// row of 12 coefficients per term.
    #[new]
    #[pyo3(signature = (terms, xi, version = 1))]
    fn new(terms: Vec<String>, xi: Vec<Vec<f64>>, version: u64) -> PyResult<Self> {
        let terms: Vec<Term> = terms.iter().map(|t| parse(t)).collect::<PyResult<_>>()?;
        if xi.len() != terms.len() || xi.iter().any(|r| r.len() != NX) {
            return Err(PyValueError::new_err(format!("xi must be {} rows of {NX}", terms.len())));
        }
        let m = DMatrix::from_fn(terms.len(), NX, |i, j| xi[i][j]);
        Ok(Self {
            inner: ident::LearnedModel::new(terms, &m, version).map_err(err)?,
        })
    }

    #[staticmethod]
    fn zero() -> Self {
        Self {
            inner: ident::LearnedModel::zero(),
        }
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: model_file::model_from_str(text).map_err(err)?,
        })
    }

    fn to_text(&self) -> String {
        model_file::model_to_string(&self.inner)
    }

    #[getter]
    fn terms(&self) -> Vec<String> {
        self.inner.terms().iter().map(|t| t.to_string()).collect()
    }

    #[getter]
    fn xi(&self) -> Vec<Vec<f64>> {
        let xi = self.inner.xi();
        (0..xi.nrows()).map(|i| xi.row(i).iter().copied().collect()).collect()
    }

    #[getter]
    fn version(&self) -> u64 {
        self.inner.version()
    }

    fn nonzeros(&self) -> usize {
        self.inner.nonzeros()
    }

    /// Residual rate `Ψ(x, u) ξ`.
    fn evaluate(&self, x: Vec<f64>, u: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.evaluate(&state(&x)?, &input(&u)?).as_slice().to_vec())
    }

    fn __repr__(&self) -> String {
        format!("LearnedModel(version={}, terms={})", self.inner.version(), self.inner.terms().len())
    }
}

/// Hover input `[m g, 0, 0, 0]` for the default airframe.
#[pyfunction]
fn hover_input() -> Vec<f64> {
    QuadParams::default().hover_input().as_slice().to_vec()
}

/// One calm-air plant step of the default airframe.
#[pyfunction]
#[pyo3(signature = (x, u, dt = 0.01))]
fn step(x: Vec<f64>, u: Vec<f64>, dt: f64) -> PyResult<Vec<f64>> {
    let wind = DrydenState::new(DrydenConfig::calm());
    let s = plant_step(&QuadParams::default(), &state(&x)?, &input(&u)?, &wind, dt).map_err(err)?;
    Ok(s.state.as_slice().to_vec())
}

/// Reference state of `trajectory` at time `t` under `config`.
#[pyfunction]
#[pyo3(signature = (trajectory, t, config = None))]
fn reference(trajectory: &str, t: f64, config: Option<PyConfig>) -> PyResult<Vec<f64>> {
    let cfg = config.map_or_else(ExperimentConfig::default, |c| c.inner);
    Ok(cfg.trajectory(parse(trajectory)?).state(t).as_slice().to_vec())
}

/// LASSO on unit-RMS columns: `min ½/n ‖y − Ψβ‖² + h‖β‖₁` in scaled units.
#[pyfunction]
fn sparse_regress(psi: Vec<Vec<f64>>, y: Vec<f64>, h: f64) -> PyResult<Vec<f64>> {
    let cols = psi.first().map_or(0, Vec::len);
    if psi.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("library rows differ in length"));
    }
    let m = DMatrix::from_fn(psi.len(), cols, |i, j| psi[i][j]);
    let b = ident::sparse_regress(&m, &DVector::from_vec(y), h).map_err(err)?;
    Ok(b.as_slice().to_vec())
}

/// Fits the residual model to a flight sampled at `config.dt`.
#[pyfunction]
#[pyo3(signature = (t, states, inputs, config = None))]
fn identify(
    t: Vec<f64>,
    states: Vec<Vec<f64>>,
    inputs: Vec<Vec<f64>>,
    config: Option<PyConfig>,
) -> PyResult<PyLearnedModel> {
    let cfg = config.map_or_else(ExperimentConfig::default, |c| c.inner);
    let data = FlightData {
        t,
        states: states.iter().map(|x| state(x)).collect::<PyResult<_>>()?,
        inputs: inputs.iter().map(|u| input(u)).collect::<PyResult<_>>()?,
    };
    let (model, _, _) = harness::identify_flight(&cfg, &data).map_err(err)?;
    Ok(PyLearnedModel { inner: model })
}

/// Initial tube for `model`: RPI half-widths, tightened boxes, spectral
/// radius of the closed loop and the certificate margin.
#[pyfunction]
#[pyo3(signature = (model = None, trajectory = "helical", config = None))]
fn tube_design<'py>(
    py: Python<'py>,
    model: Option<PyLearnedModel>,
    trajectory: &str,
    config: Option<PyConfig>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.map_or_else(ExperimentConfig::default, |c| c.inner);
    let m = model.map_or_else(ident::LearnedModel::zero, |m| m.inner);
    let d = harness::tube_design(&cfg, Arc::new(m), parse(trajectory)?).map_err(err)?;
    let s = &d.snapshot;
    let out = PyDict::new(py);
    out.set_item("rpi_half_widths", s.rpi.half_widths.as_slice().to_vec())?;
    out.set_item("state_lower", s.state_box.lower.as_slice().to_vec())?;
    out.set_item("state_upper", s.state_box.upper.as_slice().to_vec())?;
    out.set_item("input_lower", s.input_box.lower.as_slice().to_vec())?;
    out.set_item("input_upper", s.input_box.upper.as_slice().to_vec())?;
    out.set_item("spectral_radius", d.spectral_radius)?;
    out.set_item("scale", s.scale)?;
    out.set_item("certificate_margin", d.margin)?;
    Ok(out)
}

/// One closed-loop run: per-step time, state, reference and input, plus
/// the run metrics.
#[pyfunction]
#[pyo3(signature = (controller, trajectory, seed = 0, config = None))]
fn run<'py>(
    py: Python<'py>,
    controller: &str,
    trajectory: &str,
    seed: u64,
    config: Option<PyConfig>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.map_or_else(ExperimentConfig::default, |c| c.inner);
    let kind: ControllerKind = parse(controller)?;
    let net = if kind == ControllerKind::NnMpc {
        Some(py.detach(|| harness::train_network(&cfg)).map_err(err)?.0)
    } else {
        None
    };
    let traj = parse(trajectory)?;
    let log = py
        .detach(|| harness::run_closed_loop(&cfg, kind, traj, seed, net))
        .map_err(err)?;
    let m = harness::compute_metrics(&log, &harness::MetricsOptions::from_config(&cfg));
    let out = PyDict::new(py);
    let col = |f: &dyn Fn(&harness::StepRecord) -> Vec<f64>| log.records.iter().map(f).collect::<Vec<_>>();
    out.set_item("t", log.records.iter().map(|r| r.t).collect::<Vec<_>>())?;
    out.set_item("state", col(&|r| r.state.as_slice().to_vec()))?;
    out.set_item("reference", col(&|r| r.reference.as_slice().to_vec()))?;
    out.set_item("input", col(&|r| r.input.as_slice().to_vec()))?;
    out.set_item("position_rmse", m.position_rmse)?;
    out.set_item("attitude_rmse", m.attitude_rmse)?;
    out.set_item("max_altitude_error", m.max_altitude_error)?;
    out.set_item("mean_solve_ms", m.mean_solve_ms)?;
    out.set_item("infeasible_hard", m.infeasible_hard)?;
    out.set_item("containment", m.containment)?;
    out.set_item("iss_violations", m.iss_violations)?;
    Ok(out)
}

#[pymodule]
#[pyo3(name = "piml_tube")]
fn piml_tube_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NX", NX)?;
    m.add("NU", NU)?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyLearnedModel>()?;
    m.add_function(wrap_pyfunction!(hover_input, m)?)?;
    m.add_function(wrap_pyfunction!(step, m)?)?;
    m.add_function(wrap_pyfunction!(reference, m)?)?;
    m.add_function(wrap_pyfunction!(sparse_regress, m)?)?;
    m.add_function(wrap_pyfunction!(identify, m)?)?;
    m.add_function(wrap_pyfunction!(tube_design, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
