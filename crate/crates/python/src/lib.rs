//! Python bindings: profile curves, shooting, entropy, flows and the
//! perturbed-torus construction.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use shrinkerlab::construction::{build_perturbed, perturbation_law, radius_constant};
use shrinkerlab::entropy::{self, DensityCenter, EntropyGrid};
use shrinkerlab::flow::{self, FlowOptions, FlowState};
use shrinkerlab::geometry::{self, Point, Topology};
use shrinkerlab::shooting::{self, IntegratorOptions, TorusOptions};
use shrinkerlab::{io, reference, LabError};

fn err(e: LabError) -> PyErr {
    match e {
        LabError::Shooting(_) | LabError::NoSignChange { .. } | LabError::Flow(_) | LabError::Io(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => {
            let items = a.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any()
        }
        Value::Object(m) => {
            let d = PyDict::new(py);
            for (k, x) in m {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn serde_to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::to_value(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &value)
}

/// Meridian of a rotationally symmetric hypersurface in the `(x, r)` half-plane.
#[pyclass(name = "ProfileCurve", module = "shrinkerlab", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyProfileCurve {
    inner: geometry::ProfileCurve,
}

impl From<geometry::ProfileCurve> for PyProfileCurve {
    fn from(inner: geometry::ProfileCurve) -> Self {
        Self { inner }
    }
}

#[pymethods]
impl PyProfileCurve {
    /// `closed=False` means an arc with both ends on the axis.
    #[new]
    #[pyo3(signature = (n, nodes, closed = true))]
    fn new(n: usize, nodes: Vec<(f64, f64)>, closed: bool) -> PyResult<Self> {
        let topology = if closed { Topology::Closed } else { Topology::AxisCapped };
        let pts = nodes.into_iter().map(|(x, r)| Point::new(x, r)).collect();
        Ok(geometry::ProfileCurve::new(n, topology, pts).map_err(err)?.into())
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(io::curve_from_json(text).map_err(err)?.into())
    }

    fn to_json(&self) -> PyResult<String> {
        io::curve_to_json(&self.inner).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn closed(&self) -> bool {
        self.inner.topology() == Topology::Closed
    }

    #[getter]
    fn nodes(&self) -> Vec<(f64, f64)> {
        self.inner.nodes().iter().map(|p| (p.x, p.r)).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "ProfileCurve(n={}, nodes={}, closed={})",
            self.inner.n(),
            self.inner.len(),
            if self.closed() { "True" } else { "False" }
        )
    }

    fn length(&self) -> f64 {
        self.inner.length()
    }

    fn area(&self) -> f64 {
        self.inner.area()
    }

    /// `(d_min, d_max)`: extreme distances of the profile from the origin.
    fn radial_extent(&self) -> (f64, f64) {
        geometry::radial_extent(&self.inner)
    }

    fn scaled(&self, factor: f64) -> Self {
        self.inner.scaled(factor).into()
    }

    /// Moves every node by `distance` along the outward normal.
    fn normal_offset(&self, distance: f64) -> PyResult<Self> {
        Ok(geometry::normal_offset(&self.inner, distance).map_err(err)?.into())
    }

    /// Mean curvature per node.
    fn mean_curvature(&self) -> PyResult<Vec<f64>> {
        Ok(geometry::geometry_bundle(&self.inner).map_err(err)?.mean_curvature)
    }

    /// `H - <X, ν>/2` per node.
    fn shrinker_residual(&self) -> PyResult<Vec<f64>> {
        geometry::shrinker_residual(&self.inner).map_err(err)
    }

    fn hausdorff(&self, other: &PyProfileCurve) -> f64 {
        geometry::hausdorff_distance(&self.inner, &other.inner)
    }

    fn encloses(&self, inner: &PyProfileCurve) -> bool {
        geometry::enclosure_test(&inner.inner, &self.inner).enclosed
    }
}

#[pyfunction]
#[pyo3(signature = (n, radius, nodes = 256))]
fn sphere(n: usize, radius: f64, nodes: usize) -> PyResult<PyProfileCurve> {
    Ok(reference::sphere(n, radius, nodes).map_err(err)?.into())
}

#[pyfunction]
#[pyo3(signature = (n, center, radius, nodes = 256))]
fn circle(n: usize, center: (f64, f64), radius: f64, nodes: usize) -> PyResult<PyProfileCurve> {
    Ok(reference::circle(n, Point::new(center.0, center.1), radius, nodes)
        .map_err(err)?
        .into())
}

/// Shoots from `(0, r0)`; returns `(status, miss)` with `miss` None unless the
/// trajectory returned to the symmetry plane.
#[pyfunction]
fn shoot(r0: f64, n: usize) -> PyResult<(String, Option<f64>)> {
    let shot = shooting::shoot(r0, n, &IntegratorOptions::default()).map_err(err)?;
    let status = serde_json::to_value(shot.status).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((status.as_str().unwrap_or_default().to_string(), shot.miss))
}

/// Shrinker torus profile and the shooting summary.
#[pyfunction]
#[pyo3(signature = (n, nodes = 2048, tol = 1e-10, bracket = None))]
fn find_torus<'py>(
    py: Python<'py>,
    n: usize,
    nodes: usize,
    tol: f64,
    bracket: Option<(f64, f64)>,
) -> PyResult<(PyProfileCurve, Bound<'py, PyAny>)> {
    let opts = TorusOptions {
        nodes,
        ..TorusOptions::default()
    };
    let res = py
        .detach(|| match bracket {
            Some(b) => shooting::find_torus(n, b, tol, &opts),
            None => shooting::find_torus_auto(n, tol, &opts),
        })
        .map_err(err)?;
    let summary = serde_to_py(py, &res.summary())?;
    Ok((res.profile.into(), summary))
}

#[pyfunction]
fn entropy_compact(curve: &PyProfileCurve) -> f64 {
    entropy::entropy_compact(&curve.inner)
}

#[pyfunction]
fn weighted_length(curve: &PyProfileCurve) -> f64 {
    entropy::weighted_length(&curve.inner)
}

#[pyfunction]
fn dn_bound(n: usize) -> f64 {
    entropy::dn_bound(n)
}

/// Gaussian density centred at `(x0, y0 e_1)` with scale `t0`.
#[pyfunction]
#[pyo3(signature = (curve, t0, x0 = 0.0, y0 = 0.0))]
fn gaussian_density(curve: &PyProfileCurve, t0: f64, x0: f64, y0: f64) -> PyResult<f64> {
    entropy::gaussian_density(&curve.inner, DensityCenter::new(x0, y0), t0).map_err(err)
}

/// Supremum of Gaussian densities over a grid of centres and scales.
#[pyfunction]
fn entropy_sup<'py>(py: Python<'py>, curve: &PyProfileCurve) -> PyResult<Bound<'py, PyAny>> {
    let c = &curve.inner;
    let sup = py
        .detach(|| entropy::entropy_sup_grid(c, &EntropyGrid::for_curve(c)))
        .map_err(err)?;
    serde_to_py(py, &sup)
}

/// A finished mean curvature flow.
#[pyclass(name = "Trajectory", module = "shrinkerlab", frozen)]
pub struct PyTrajectory {
    inner: flow::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn termination(&self) -> PyResult<String> {
        let v = serde_json::to_value(self.inner.termination).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(v.as_str().unwrap_or_default().to_string())
    }

    #[getter]
    fn last_time(&self) -> f64 {
        self.inner.last_time()
    }

    /// `[(t, curve)]` for every stored snapshot.
    #[getter]
    fn snapshots(&self) -> Vec<(f64, PyProfileCurve)> {
        self.inner
            .snapshots
            .iter()
            .map(|(t, _, c)| (*t, c.clone().into()))
            .collect()
    }

    /// Dense series as a dict of equal-length lists.
    fn series<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = &self.inner.series;
        let d = PyDict::new(py);
        d.set_item("t", s.t.clone())?;
        d.set_item("max_abs_A", s.max_abs_a.clone())?;
        d.set_item("d_min", s.d_min.clone())?;
        d.set_item("d_max", s.d_max.clone())?;
        d.set_item("min_S", s.min_s.clone())?;
        d.set_item("max_F", s.max_f.clone())?;
        d.set_item("length", s.length.clone())?;
        d.set_item("area", s.area.clone())?;
        d.set_item("min_r", s.min_r.clone())?;
        Ok(d)
    }

    /// The flow at time `t`, re-integrated from the nearest earlier snapshot.
    fn state_at(&self, py: Python<'_>, t: f64) -> PyResult<PyProfileCurve> {
        let traj = &self.inner;
        Ok(py.detach(|| traj.state_at(t)).map_err(err)?.into())
    }

    /// Singularity record (as a dict) for a flow that ended singularly.
    fn singularity<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        serde_to_py(py, &flow::detect_singularity(&self.inner).map_err(err)?)
    }

    /// Writes the run archive into `directory`.
    #[pyo3(signature = (directory, series_stride = 1))]
    fn save(&self, directory: std::path::PathBuf, series_stride: usize) -> PyResult<()> {
        let record = if self.inner.termination.is_singular() {
            flow::detect_singularity(&self.inner).ok()
        } else {
            None
        };
        io::write_run(&directory, &self.inner, record.as_ref(), series_stride).map_err(err)
    }
}

/// Evolves `curve` by mean curvature flow from time `t0`.
#[pyfunction]
#[pyo3(signature = (curve, t0 = 0.0, t_end = None, max_steps = None, snapshot_every = None, snapshot_times = None))]
fn evolve(
    py: Python<'_>,
    curve: &PyProfileCurve,
    t0: f64,
    t_end: Option<f64>,
    max_steps: Option<usize>,
    snapshot_every: Option<usize>,
    snapshot_times: Option<Vec<f64>>,
) -> PyResult<PyTrajectory> {
    let mut opts = FlowOptions {
        t_end,
        ..FlowOptions::default()
    };
    if let Some(m) = max_steps {
        opts.max_steps = m;
    }
    if let Some(k) = snapshot_every {
        opts.snapshot_every = k;
    }
    if let Some(ts) = snapshot_times {
        opts.snapshot_times = ts;
    }
    let init = FlowState::new(curve.inner.clone(), t0);
    let inner = py.detach(|| flow::evolve(&init, &opts)).map_err(err)?;
    Ok(PyTrajectory { inner })
}

/// `T_i`: the torus moved inward by `1/i`; returns `(curve, min_S)`.
#[pyfunction]
fn perturbed_torus(torus: &PyProfileCurve, i: u32) -> PyResult<(PyProfileCurve, f64)> {
    let p = build_perturbed(&torus.inner, i).map_err(err)?;
    Ok((p.curve.into(), p.min_s))
}

/// `(min(|A|² + 1/2), radius constant)` of a torus profile.
#[pyfunction]
fn torus_constants(torus: &PyProfileCurve) -> PyResult<(f64, f64)> {
    Ok((perturbation_law(&torus.inner).map_err(err)?, radius_constant(&torus.inner)))
}

#[pymodule]
#[pyo3(name = "shrinkerlab")]
fn shrinkerlab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyProfileCurve>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(sphere, m)?)?;
    m.add_function(wrap_pyfunction!(circle, m)?)?;
    m.add_function(wrap_pyfunction!(shoot, m)?)?;
    m.add_function(wrap_pyfunction!(find_torus, m)?)?;
    m.add_function(wrap_pyfunction!(entropy_compact, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_length, m)?)?;
    m.add_function(wrap_pyfunction!(dn_bound, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_density, m)?)?;
    m.add_function(wrap_pyfunction!(entropy_sup, m)?)?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(perturbed_torus, m)?)?;
    m.add_function(wrap_pyfunction!(torus_constants, m)?)?;
    Ok(())
}
