//! Python bindings: spectrum partitioning, iteration bounds, polynomial
//! verification, Ritz extraction, and a small diagonal-system CG driver.

use cgbound::bounds::{cluster_degrees, verify_polynomial, ClusterPartition, Spectrum};
use cgbound::krylov::{
    diagonal_system, pcg, ritz_values, IdentityPreconditioner, StopMode, StopRule,
};
use cgbound::partition::{bound_report, greedy_partition, lambert_w_minus1};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn spectrum(values: Vec<f64>) -> PyResult<Spectrum> {
    Spectrum::new(values).map_err(err)
}

/// W_{-1}(x) for x in [-1/e, 0).
#[pyfunction]
#[pyo3(name = "lambert_w_minus1")]
fn py_lambert_w_minus1(x: f64) -> PyResult<f64> {
    lambert_w_minus1(x).map_err(err)
}

/// Classical PCG iteration bound from the condition number.
#[pyfunction]
#[pyo3(name = "m1")]
fn py_m1(kappa: f64, eps: f64) -> usize {
    cgbound::bounds::m1(kappa, eps)
}

/// Two-cluster PCG iteration bound.
#[pyfunction]
#[pyo3(name = "m2")]
fn py_m2(kappa: f64, kappa1: f64, kappa2: f64, eps: f64) -> usize {
    cgbound::bounds::m2(kappa, kappa1, kappa2, eps)
}

/// Greedy gap partition of an ascending positive spectrum; returns the
/// cluster boundary indices [0, k_1, ..., k_s = n].
#[pyfunction]
#[pyo3(name = "partition")]
fn py_partition(values: Vec<f64>, eps: f64) -> PyResult<Vec<usize>> {
    let spec = spectrum(values)?;
    let part = greedy_partition(&spec, eps).map_err(err)?;
    Ok(part.indices().to_vec())
}

/// Per-cluster Chebyshev degrees for a given partition (boundary indices).
#[pyfunction]
#[pyo3(name = "degrees")]
fn py_degrees(values: Vec<f64>, indices: Vec<usize>, eps: f64) -> PyResult<Vec<usize>> {
    let spec = spectrum(values)?;
    let inner: Vec<usize> = indices
        .iter()
        .copied()
        .filter(|&k| k != 0 && k != spec.len())
        .collect();
    let part = ClusterPartition::new(spec.len(), &inner).map_err(err)?;
    let poly = cluster_degrees(&spec, &part, eps).map_err(err)?;
    Ok(poly.degrees)
}

/// Full bound report (m1, ms, partition, degrees, ...) as a dict.
#[pyfunction]
#[pyo3(name = "bound_report")]
fn py_bound_report(py: Python<'_>, values: Vec<f64>, eps: f64) -> PyResult<Py<PyDict>> {
    let spec = spectrum(values)?;
    let report = bound_report(&spec, eps).map_err(err)?;
    let json = serde_json::to_value(&report).map_err(err)?;
    json_to_pydict(py, &json)
}

/// Verifies the multi-cluster polynomial on its spectrum; returns
/// (pass, max_log).
#[pyfunction]
#[pyo3(name = "verify")]
fn py_verify(values: Vec<f64>, eps: f64) -> PyResult<(bool, f64)> {
    let spec = spectrum(values)?;
    let part = greedy_partition(&spec, eps).map_err(err)?;
    let poly = cluster_degrees(&spec, &part, eps).map_err(err)?;
    let report = verify_polynomial(&spec, &poly, eps).map_err(err)?;
    Ok((report.pass, report.max_log))
}

/// Ritz values from recorded CG coefficients (alphas, betas).
#[pyfunction]
#[pyo3(name = "ritz_from_coeffs")]
fn py_ritz_from_coeffs(alphas: Vec<f64>, betas: Vec<f64>) -> PyResult<Vec<f64>> {
    if alphas.len() != betas.len() {
        return Err(PyValueError::new_err("alphas and betas must have equal length"));
    }
    let trace = cgbound::krylov::CGTrace {
        alphas,
        betas,
        ..Default::default()
    };
    let ritz = ritz_values(&trace).map_err(err)?;
    Ok(ritz.values().to_vec())
}

/// Runs CG on the diagonal system with the given spectrum to relative
/// A-norm error eps; returns (iterations, ms_from_spectrum, m1).
#[pyfunction]
#[pyo3(name = "solve_diagonal")]
fn py_solve_diagonal(values: Vec<f64>, eps: f64) -> PyResult<(usize, usize, usize)> {
    let spec = spectrum(values)?;
    let a = diagonal_system(&spec);
    let n = a.n_rows();
    let b = vec![1.0; n];
    let x_ref: Vec<f64> = spec.values().iter().map(|&l| 1.0 / l).collect();
    let stop = StopRule::new(StopMode::ANormError, eps, 10 * n + 100).map_err(err)?;
    let x0 = vec![0.0; n];
    let (_, trace) = pcg(&a, &b, &IdentityPreconditioner, &stop, &x0, Some(&x_ref), None)
        .map_err(err)?;
    let report = bound_report(&spec, eps).map_err(err)?;
    Ok((trace.iterations(), report.ms, report.m1))
}

fn json_to_pydict(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyDict>> {
    let dict = PyDict::new(py);
    let serde_json::Value::Object(map) = v else {
        return Err(PyValueError::new_err("expected a JSON object"));
    };
    for (k, val) in map {
        dict.set_item(k, json_to_py(py, val)?)?;
    }
    Ok(dict.into())
}

fn json_to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<pyo3::PyAny>> {
    use pyo3::IntoPyObjectExt;
    Ok(match v {
        serde_json::Value::Null => py.None(),
        serde_json::Value::Bool(b) => b.into_py_any(py)?,
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_u64() {
                i.into_py_any(py)?
            } else if let Some(i) = n.as_i64() {
                i.into_py_any(py)?
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_py_any(py)?
            }
        }
        serde_json::Value::String(s) => s.into_py_any(py)?,
        serde_json::Value::Array(items) => {
            let out: Vec<Py<pyo3::PyAny>> =
                items.iter().map(|x| json_to_py(py, x)).collect::<PyResult<_>>()?;
            out.into_py_any(py)?
        }
        serde_json::Value::Object(_) => json_to_pydict(py, v)?.into_py_any(py)?,
    })
}

#[pymodule]
fn cgbound_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(py_lambert_w_minus1, m)?)?;
    m.add_function(wrap_pyfunction!(py_m1, m)?)?;
    m.add_function(wrap_pyfunction!(py_m2, m)?)?;
    m.add_function(wrap_pyfunction!(py_partition, m)?)?;
    m.add_function(wrap_pyfunction!(py_degrees, m)?)?;
    m.add_function(wrap_pyfunction!(py_bound_report, m)?)?;
    m.add_function(wrap_pyfunction!(py_verify, m)?)?;
    m.add_function(wrap_pyfunction!(py_ritz_from_coeffs, m)?)?;
    m.add_function(wrap_pyfunction!(py_solve_diagonal, m)?)?;
    Ok(())
}
