//! Python bindings. Results come back as plain dictionaries (decoded from the
//! same JSON summaries the command line writes) and fields as `VectorField`
//! handles.

use curlvar_core::brezis_nirenberg::{c0_from_quotient, compute_c_lambda, BnConfig};
use curlvar_core::groundstate::{minimize_sphere, sobolev_oracle as oracle, GroundStateConfig};
use curlvar_core::spectrum::{curl_curl_eigs, ladder};
use curlvar_core::verify::{run_suite, VerifyConfig};
use curlvar_core::{Error, Staggering};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidGrid(_) | Error::InvalidField(_) | Error::Domain(_) | Error::UnderResolved(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_dict<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn triple<T: Copy>(one: Option<T>, three: Option<[T; 3]>, name: &str) -> PyResult<[T; 3]> {
    match (one, three) {
        (Some(x), None) => Ok([x; 3]),
        (None, Some(v)) => Ok(v),
        _ => Err(PyValueError::new_err(format!("{name} must be a number or a sequence of three"))),
    }
}

/// Box `(0, L1) x (0, L2) x (0, L3)` with a cell count per axis.
#[pyclass(name = "GridSpec", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGridSpec {
    inner: curlvar_core::GridSpec,
}

#[pymethods]
impl PyGridSpec {
    #[new]
    #[pyo3(signature = (box_lengths, cells))]
    fn new(box_lengths: &Bound<'_, PyAny>, cells: &Bound<'_, PyAny>) -> PyResult<Self> {
        let lengths = triple(box_lengths.extract().ok(), box_lengths.extract().ok(), "box_lengths")?;
        let cells = triple(cells.extract().ok(), cells.extract().ok(), "cells")?;
        let inner = curlvar_core::GridSpec::new(lengths, cells).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn cells(&self) -> [usize; 3] {
        self.inner.cells
    }

    #[getter]
    fn box_lengths(&self) -> [f64; 3] {
        self.inner.box_lengths
    }

    #[getter]
    fn spacing(&self) -> [f64; 3] {
        self.inner.spacing()
    }

    #[getter]
    fn volume(&self) -> f64 {
        self.inner.volume()
    }

    fn __repr__(&self) -> String {
        format!("GridSpec(box_lengths={:?}, cells={:?})", self.inner.box_lengths, self.inner.cells)
    }
}

/// Staggered vector field on a grid.
#[pyclass(name = "VectorField", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyVectorField {
    inner: curlvar_core::VectorField,
}

fn staggering_name(s: Staggering) -> &'static str {
    match s {
        Staggering::Edge => "edge",
        Staggering::Face => "face",
    }
}

#[pymethods]
impl PyVectorField {
    /// Uniform random samples in `[-1, 1)` on the edges, boundary tangential
    /// values zeroed.
    #[staticmethod]
    fn random(grid: &PyGridSpec, seed: u64) -> Self {
        Self { inner: curlvar_core::VectorField::random(&grid.inner, seed) }
    }

    #[staticmethod]
    #[pyo3(signature = (grid, components, staggering = "edge"))]
    fn from_components(grid: &PyGridSpec, components: [Vec<f64>; 3], staggering: &str) -> PyResult<Self> {
        let s = match staggering {
            "edge" => Staggering::Edge,
            "face" => Staggering::Face,
            other => return Err(PyValueError::new_err(format!("unknown staggering {other:?}"))),
        };
        let inner = curlvar_core::VectorField::from_components(&grid.inner, s, components).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn staggering(&self) -> &'static str {
        staggering_name(self.inner.staggering())
    }

    #[getter]
    fn grid(&self) -> PyGridSpec {
        PyGridSpec { inner: *self.inner.grid() }
    }

    /// The three component arrays, each flattened with z fastest.
    fn components(&self) -> [Vec<f64>; 3] {
        self.inner.components().clone()
    }

    /// Array shape of component `c`.
    fn shape(&self, c: usize) -> PyResult<[usize; 3]> {
        if c > 2 {
            return Err(PyValueError::new_err("component index must be 0, 1 or 2"));
        }
        Ok(self.inner.shape(c).dims)
    }

    fn norm_l2(&self) -> f64 {
        self.inner.norm_l2()
    }

    /// `|curl u|_2^2`
    fn curl_energy(&self) -> f64 {
        curlvar_core::energy::curl_energy(&self.inner)
    }

    fn lp_norm(&self, p: f64) -> PyResult<f64> {
        curlvar_core::lp_norm(&self.inner, p).map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Minimises over the curl-normalised sphere; returns `(summary, field)`.
#[pyfunction]
#[pyo3(signature = (grid, seed = 1, tol = 1e-3, max_iter = 400, inner_tol = 1e-7))]
fn groundstate<'py>(
    py: Python<'py>,
    grid: &PyGridSpec,
    seed: u64,
    tol: f64,
    max_iter: usize,
    inner_tol: f64,
) -> PyResult<(Bound<'py, PyAny>, PyVectorField)> {
    let cfg = GroundStateConfig { seed, tol, max_iter, inner_tol, ..GroundStateConfig::default() };
    let g = grid.inner;
    let r = py.detach(|| minimize_sphere(&g, &cfg)).map_err(to_py_err)?;
    Ok((to_dict(py, &r.summary())?, PyVectorField { inner: r.point.u }))
}

/// Smallest curl-curl eigenvalues with residuals and their clusters.
#[pyfunction]
#[pyo3(signature = (grid, count = 8, tol = 1e-8))]
fn spectrum<'py>(py: Python<'py>, grid: &PyGridSpec, count: usize, tol: f64) -> PyResult<Bound<'py, PyAny>> {
    let g = grid.inner;
    let pairs = py.detach(|| curl_curl_eigs(&g, count, tol)).map_err(to_py_err)?;
    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.lambda_k).collect();
    let residuals: Vec<f64> = pairs.iter().map(|p| p.rayleigh_residual).collect();
    let out = serde_json::json!({ "eigenvalues": eigenvalues, "residuals": residuals, "ladder": ladder(&pairs) });
    to_dict(py, &out)
}

/// Shifted level `c_lambda` for `lambda <= 0`. Without `c0` a ground-state
/// run on the same grid supplies it.
#[pyfunction]
#[pyo3(signature = (grid, lam, count = 8, c0 = None, seed = 1))]
fn bn<'py>(py: Python<'py>, grid: &PyGridSpec, lam: f64, count: usize, c0: Option<f64>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let g = grid.inner;
    let cfg = BnConfig { sphere: GroundStateConfig { seed, ..GroundStateConfig::default() }, ..BnConfig::default() };
    let r = py
        .detach(|| -> curlvar_core::Result<_> {
            let pairs = curl_curl_eigs(&g, count, 1e-8)?;
            let (c0, start) = match c0 {
                Some(c) => (c, None),
                None => {
                    let gs = minimize_sphere(&g, &cfg.sphere)?;
                    (c0_from_quotient(gs.s_estimate), Some(gs.point.u))
                }
            };
            compute_c_lambda(lam, &pairs, &g, &cfg, c0, start.as_ref())
        })
        .map_err(to_py_err)?;
    to_dict(py, &r.summary())
}

/// Sobolev quotient of the cut-off instanton on a grid centred at the origin.
#[pyfunction]
#[pyo3(signature = (half_width = 8.0, cells = 48, eps = 1.0))]
fn sobolev_oracle(py: Python<'_>, half_width: f64, cells: usize, eps: f64) -> PyResult<f64> {
    let g = curlvar_core::GridSpec::centered_cube(half_width, cells).map_err(to_py_err)?;
    py.detach(|| oracle(&g, eps)).map_err(to_py_err)
}

/// Invariant suite; `quick` selects the reduced sizes.
#[pyfunction]
#[pyo3(signature = (quick = true, seed = 1))]
fn verify<'py>(py: Python<'py>, quick: bool, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let cfg = VerifyConfig { seed, ..if quick { VerifyConfig::quick() } else { VerifyConfig::default() } };
    let report = py.detach(|| run_suite(&cfg)).map_err(to_py_err)?;
    let out = serde_json::json!({ "passed": report.passed(), "sections": report.sections });
    to_dict(py, &out)
}

#[pymodule]
fn curlvar(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGridSpec>()?;
    m.add_class::<PyVectorField>()?;
    m.add_function(wrap_pyfunction!(groundstate, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(bn, m)?)?;
    m.add_function(wrap_pyfunction!(sobolev_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
