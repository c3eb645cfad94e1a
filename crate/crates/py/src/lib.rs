//! Python module `mtwkit`.
//!
//! Structured results (reports, shapes, scenarios) cross the boundary as
//! JSON and come back as plain dicts.

use mtwkit::cli::{demo as builtin_demo, run_scenario, Scenario, DEMOS};
use mtwkit::cost::{Cost as _, CostSpec, Point, RadialCost};
use mtwkit::geometry::Shape;
use mtwkit::mtw::{classify_condition, mtw_tensor, FramePair};
use mtwkit::transport::{c_transform as ct, normalize_and_validate, solve_discrete_with, SolverOptions, WeightedCloud};
use nalgebra::DVector;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyString;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn err(e: mtwkit::Error) -> PyErr {
    match e {
        mtwkit::Error::Config { .. } | mtwkit::Error::InvalidInput(_) => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

/// Accepts a JSON string or anything `json.dumps` can serialize.
fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let s: String = if obj.is_instance_of::<PyString>() {
        obj.extract()?
    } else {
        obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?
    };
    serde_json::from_str(&s).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn points(v: Vec<Vec<f64>>) -> Vec<Point> {
    v.into_iter().map(DVector::from_vec).collect()
}

/// A catalog cost in dimension `dim`, e.g. `Cost("power", 2, p=4.0)`.
#[pyclass(frozen, module = "mtwkit")]
struct Cost {
    inner: RadialCost,
}

#[pymethods]
impl Cost {
    #[new]
    #[pyo3(signature = (name, dim, p = None))]
    fn new(name: &str, dim: usize, p: Option<f64>) -> PyResult<Self> {
        let mut spec = serde_json::json!({ "name": name });
        if let Some(p) = p {
            spec["p"] = p.into();
        }
        let spec: CostSpec = serde_json::from_value(spec).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self {
            inner: RadialCost::new(dim, spec).map_err(err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label()
    }

    fn is_valid(&self, x: Vec<f64>, y: Vec<f64>) -> bool {
        self.inner.is_valid(&x, &y)
    }

    fn __call__(&self, x: Vec<f64>, y: Vec<f64>) -> f64 {
        self.inner.eval(&x, &y)
    }

    fn grad_x(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.grad_x(&x, &y).map_err(err)?.as_slice().to_vec())
    }

    fn grad_y(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.grad_y(&x, &y).map_err(err)?.as_slice().to_vec())
    }

    /// MTW tensor at `(x, y)` on the orthogonal pair `(xi, eta)`.
    fn mtw_tensor(&self, x: Vec<f64>, y: Vec<f64>, xi: Vec<f64>, eta: Vec<f64>) -> PyResult<f64> {
        let frame = FramePair::new(DVector::from_vec(xi), DVector::from_vec(eta)).map_err(err)?;
        mtw_tensor(&self.inner, &DVector::from_vec(x), &DVector::from_vec(y), &frame).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Cost({}, dim={})", self.inner.label(), self.inner.dim())
    }
}

/// Classify a cost on two shapes, e.g. `{"kind": "ball", "center": [0, 0], "radius": 0.2}`.
#[pyfunction]
#[pyo3(signature = (cost, source, target, n_pairs = 200, n_frames = 16, resolution = 24))]
fn classify<'py>(
    py: Python<'py>,
    cost: &Cost,
    source: &Bound<'py, PyAny>,
    target: &Bound<'py, PyAny>,
    n_pairs: usize,
    n_frames: usize,
    resolution: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let (s, t): (Shape, Shape) = (from_py(source)?, from_py(target)?);
    let c = &cost.inner;
    let r = py
        .detach(|| classify_condition(c, &s.sample(resolution)?, &t.sample(resolution)?, n_pairs, n_frames))
        .map_err(err)?;
    to_py(py, &r)
}

/// Exact discrete transport between weighted point sets. Weights are
/// normalized to total one each.
#[pyfunction]
fn solve<'py>(
    py: Python<'py>,
    cost: &Cost,
    xs: Vec<Vec<f64>>,
    a: Vec<f64>,
    ys: Vec<Vec<f64>>,
    b: Vec<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let c = &cost.inner;
    let sol = py
        .detach(|| {
            let (mu, nu) = normalize_and_validate(&WeightedCloud::new(xs, a), &WeightedCloud::new(ys, b), true)?;
            solve_discrete_with(c, &mu, &nu, &SolverOptions::default())
        })
        .map_err(err)?;
    to_py(py, &sol)
}

/// `u(x) = min_j c(x, y_j) − v_j` at each `x`.
#[pyfunction]
fn c_transform(cost: &Cost, v: Vec<f64>, ys: Vec<Vec<f64>>, xs: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    Ok(ct(&cost.inner, &v, &points(ys), &points(xs)).map_err(err)?.values)
}

#[pyfunction]
fn demos() -> Vec<&'static str> {
    DEMOS.to_vec()
}

/// Scenario of a built-in demo, as a dict.
#[pyfunction]
fn demo<'py>(py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &builtin_demo(name).map_err(err)?)
}

/// Run a scenario (dict or JSON string) through every stage, or just `stage`.
#[pyfunction]
#[pyo3(signature = (scenario, stage = None))]
fn run<'py>(py: Python<'py>, scenario: &Bound<'py, PyAny>, stage: Option<String>) -> PyResult<Bound<'py, PyAny>> {
    let s: Scenario = from_py(scenario)?;
    s.validate().map_err(err)?;
    let (report, _, _) = py.detach(|| run_scenario(&s, stage.as_deref())).map_err(err)?;
    to_py(py, &report)
}

#[pymodule(name = "mtwkit")]
fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Cost>()?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(c_transform, m)?)?;
    m.add_function(wrap_pyfunction!(demos, m)?)?;
    m.add_function(wrap_pyfunction!(demo, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
