//! Python bindings. Structured inputs and reports cross the boundary as JSON strings.

use dynvertex::asymptotics::{self, ExperimentConfig, Shape};
use dynvertex::models::{run_ensemble, ModelSpec, Observable};
use dynvertex::observables::{identity_check, IdentityOptions, ObservableSpec};
use dynvertex::{Error, C64};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InadmissibleParameters(_) | Error::OutOfDomain(_) | Error::ContourInfeasible(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse<T: serde::de::DeserializeOwned>(what: &str, text: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

fn dump<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// `(a; q)_k` for integer `k`.
#[pyfunction]
fn q_pochhammer(a: C64, q: C64, k: i64) -> PyResult<C64> {
    dynvertex::specfun::q_pochhammer(a, q, k).map_err(to_py)
}

/// Heat-equation profile `H(s, r)` for the `(J; infinity)`-PEP.
#[pyfunction]
#[pyo3(name = "heat_profile", signature = (s, r, j))]
fn heat_profile_py(s: f64, r: f64, j: u32) -> PyResult<f64> {
    asymptotics::heat_profile(s, r, j).map_err(to_py)
}

/// Limit shapes of the asymmetric PEP: `shape` is one of `m`, `f`, `M`, `F`.
#[pyfunction]
fn lln_shape(q: f64, shape: &str, point: f64) -> PyResult<f64> {
    let sh: Shape = shape.parse().map_err(to_py)?;
    asymptotics::lln_shapes(q, sh, point).map_err(to_py)
}

/// Ensemble `(mean, stderr)` per observable at time `steps`. `model` is a JSON model spec
/// such as `{"model": "qhahn", "q": 0.5, "delta": -0.5, "b": [8], "J": [1]}`.
#[pyfunction]
#[pyo3(signature = (model, steps, samples = 1000, seed = 0, observables = vec!["particles".to_string()]))]
fn simulate(py: Python<'_>, model: &str, steps: usize, samples: usize, seed: u64, observables: Vec<String>) -> PyResult<Vec<(f64, f64)>> {
    let spec: ModelSpec = parse("model", model)?;
    let obs = observables.iter().map(|o| o.parse::<Observable>()).collect::<Result<Vec<_>, _>>().map_err(to_py)?;
    let res = py.detach(|| run_ensemble(&spec, steps, samples, seed, &obs, true)).map_err(to_py)?;
    Ok(res.estimates[0].iter().map(|e| (e.mean, e.stderr)).collect())
}

/// Moment identity report (JSON) for a JSON observable spec.
#[pyfunction]
#[pyo3(signature = (spec, samples = 10_000, seed = 0))]
fn verify_identity(py: Python<'_>, spec: &str, samples: usize, seed: u64) -> PyResult<String> {
    let spec: ObservableSpec = parse("spec", spec)?;
    let rep = py.detach(|| identity_check(&spec, &IdentityOptions { samples, seed, ..Default::default() })).map_err(to_py)?;
    dump(&rep)
}

/// Experiment report (JSON) for a JSON config tagged with `experiment`.
#[pyfunction]
#[pyo3(signature = (config, seed = 0))]
fn experiment(py: Python<'_>, config: &str, seed: u64) -> PyResult<String> {
    let cfg: ExperimentConfig = parse("config", config)?;
    let rep = py.detach(|| asymptotics::experiment(&cfg, seed, true)).map_err(to_py)?;
    dump(&rep)
}

/// Runs the command-line interface with `args` (without the program name); returns the exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    py.detach(|| dynvertex::cli::dispatch(std::iter::once("dynvertex".to_string()).chain(args)))
}

#[pymodule]
#[pyo3(name = "dynvertex")]
pub fn dynvertex_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(q_pochhammer, m)?)?;
    m.add_function(wrap_pyfunction!(heat_profile_py, m)?)?;
    m.add_function(wrap_pyfunction!(lln_shape, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(verify_identity, m)?)?;
    m.add_function(wrap_pyfunction!(experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
