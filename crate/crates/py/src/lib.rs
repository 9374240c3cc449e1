//! Python bindings: preference profiles, matchings, the solvers, exact
//! counts, the estimators and the `t★` optimizer.

use num_bigint::{BigInt, BigUint};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList, PyString};
use serde::Serialize;
use serde_json::Value;

use roommates::{bound_optimizer, combinatorics, estimators, instances, matchings, solvers};
use roommates::{Error, Matching, PreferenceProfile, RngStream};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::ResourceCap(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => u.into_pyobject(py)?.into_any(),
            (_, Some(i)) => i.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => PyString::new(py, s).into_any(),
        Value::Array(a) => {
            let items = a.iter().map(|x| json_to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, json_to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

#[pyclass(name = "PreferenceProfile", module = "pyroommates", frozen)]
struct PyProfile(PreferenceProfile);

#[pymethods]
impl PyProfile {
    /// Profile induced by i.i.d. uniform utilities.
    #[staticmethod]
    #[pyo3(signature = (n, seed = 0, stream = 0))]
    fn sample(n: usize, seed: u64, stream: u64) -> PyResult<Self> {
        let mut rng = RngStream::new(seed, stream).rng();
        let u = instances::sample_utilities(n, &mut rng).map_err(py_err)?;
        Ok(Self(instances::rank_from_utilities(&u).map_err(py_err)?))
    }

    /// Weighted draw in which the matching `pi` is stable; returns
    /// `(profile, log_weight)`.
    #[staticmethod]
    #[pyo3(signature = (pi, seed = 0, stream = 0))]
    fn sample_given_stable(pi: &PyMatching, seed: u64, stream: u64) -> PyResult<(Self, f64)> {
        let mut rng = RngStream::new(seed, stream).rng();
        let c = estimators::sample_instance_given_stable(&pi.0, &mut rng).map_err(py_err)?;
        Ok((Self(c.profile), c.log_weight))
    }

    /// From 0-indexed preference lists, best first.
    #[staticmethod]
    fn from_lists(lists: Vec<Vec<usize>>) -> PyResult<Self> {
        PreferenceProfile::from_lists(&lists).map(Self).map_err(py_err)
    }

    /// From the text format (`n`, then `i: a b c ...`, 1-indexed).
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        instances::parse_instance(text).map(Self).map_err(py_err)
    }

    fn to_text(&self) -> String {
        instances::serialize_instance(&self.0)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    fn list(&self, i: usize) -> PyResult<Vec<usize>> {
        self.check(i)?;
        Ok(self.0.list(i).iter().map(|&v| v as usize).collect())
    }

    fn rank(&self, i: usize, j: usize) -> PyResult<usize> {
        self.check(i)?;
        self.check(j)?;
        Ok(self.0.rank(i, j))
    }

    fn __repr__(&self) -> String {
        format!("PreferenceProfile(n={})", self.0.n())
    }
}

impl PyProfile {
    fn check(&self, i: usize) -> PyResult<()> {
        if i >= self.0.n() {
            return Err(PyValueError::new_err(format!("agent {i} out of range")));
        }
        Ok(())
    }
}

#[pyclass(name = "Matching", module = "pyroommates", frozen, eq)]
#[derive(PartialEq)]
struct PyMatching(Matching);

#[pymethods]
impl PyMatching {
    /// From a partner array: `partner[i]` is matched to `i`.
    #[new]
    fn new(partner: Vec<usize>) -> PyResult<Self> {
        Matching::new(partner).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn from_pairs(n: usize, pairs: Vec<(usize, usize)>) -> PyResult<Self> {
        Matching::from_pairs(n, &pairs).map(Self).map_err(py_err)
    }

    /// `{(0, 1), (2, 3), ...}`.
    #[staticmethod]
    fn consecutive(n: usize) -> PyResult<Self> {
        Matching::consecutive(n).map(Self).map_err(py_err)
    }

    /// From `"1-2 3-4"` (1-indexed).
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        text.parse().map(Self).map_err(py_err)
    }

    /// This matching with alternating cycles of the given half-lengths
    /// swapped in on consecutive pairs.
    fn with_cycles(&self, half_lengths: Vec<usize>) -> PyResult<Self> {
        self.0.with_cycles(&half_lengths).map(Self).map_err(py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    fn partner(&self, i: usize) -> PyResult<usize> {
        self.0
            .partners()
            .get(i)
            .copied()
            .ok_or_else(|| PyValueError::new_err(format!("agent {i} out of range")))
    }

    fn pairs(&self) -> Vec<(usize, usize)> {
        self.0.pairs()
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Matching('{}')", self.0)
    }
}

/// Irving's algorithm; `None` when no stable matching exists.
#[pyfunction]
fn irving_solve(p: &PyProfile) -> Option<PyMatching> {
    match solvers::irving_solve(&p.0).outcome {
        solvers::Outcome::Found(m) => Some(PyMatching(m)),
        solvers::Outcome::NoneExists => None,
    }
}

#[pyfunction]
fn is_stable(p: &PyProfile, m: &PyMatching) -> PyResult<bool> {
    matchings::is_stable(&p.0, &m.0).map_err(py_err)
}

#[pyfunction]
fn blocking_pairs(p: &PyProfile, m: &PyMatching) -> PyResult<Vec<(usize, usize)>> {
    matchings::blocking_pairs(&p.0, &m.0).map_err(py_err)
}

/// All stable matchings, by exhaustive search.
#[pyfunction]
#[pyo3(signature = (p, limit = None, cap = solvers::DEFAULT_ENUMERATION_CAP))]
fn enumerate_stable(p: &PyProfile, limit: Option<usize>, cap: usize) -> PyResult<Vec<PyMatching>> {
    let opts = solvers::EnumerateOptions {
        limit,
        cap,
        ..Default::default()
    };
    let r = solvers::enumerate_stable(&p.0, &opts).map_err(py_err)?;
    Ok(r.stable_list.unwrap_or_default().into_iter().map(PyMatching).collect())
}

/// Stable matchings that differ from the stable matching `pi` by one cycle.
#[pyfunction]
fn stable_cycle_neighbors(p: &PyProfile, pi: &PyMatching, nu_cap: usize) -> PyResult<Vec<PyMatching>> {
    let v = solvers::stable_cycle_neighbors(&p.0, &pi.0, nu_cap).map_err(py_err)?;
    Ok(v.into_iter().map(PyMatching).collect())
}

/// Cycles of `a △ b` as vertex lists.
#[pyfunction]
fn symmetric_difference(a: &PyMatching, b: &PyMatching) -> PyResult<Vec<Vec<usize>>> {
    Ok(matchings::symmetric_difference(&a.0, &b.0).map_err(py_err)?.cycles)
}

#[pyfunction]
fn double_factorial(k: u64) -> PyResult<BigUint> {
    combinatorics::double_factorial(k)
        .exact
        .ok_or_else(|| PyRuntimeError::new_err(format!("{k}!! is only available on the log scale")))
}

/// `(exact or None, natural log)` of the number of matchings differing from
/// a fixed one by a single cycle of half-length `nu`.
#[pyfunction]
fn single_cycle_count(n: u64, nu: u64) -> PyResult<(Option<BigUint>, f64)> {
    let c = combinatorics::single_cycle_count(n, nu).map_err(py_err)?;
    Ok((c.exact, c.log_value))
}

/// `P({(0,1), (2,3), ...} is stable)` as `(numerator, denominator)`.
#[pyfunction]
fn exact_stability_probability(n: usize) -> PyResult<(BigInt, BigInt)> {
    let r = estimators::exact_stability_probability(n).map_err(py_err)?;
    Ok((r.numer().clone(), r.denom().clone()))
}

#[pyfunction]
#[pyo3(signature = (n, samples, seed = 0, rate = None))]
fn estimate_expected_x<'py>(
    py: Python<'py>,
    n: usize,
    samples: usize,
    seed: u64,
    rate: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let rate = rate.unwrap_or_else(|| estimators::default_rate(n));
    let e = estimators::estimate_expected_x_with_rate(n, samples, &RngStream::new(seed, 0), rate)
        .map_err(py_err)?;
    to_dict(py, &e)
}

/// Normalized two-point ratio for a difference made of cycles with the
/// given half-lengths.
#[pyfunction]
#[pyo3(signature = (n, half_lengths, samples, seed = 0))]
fn estimate_two_point<'py>(
    py: Python<'py>,
    n: usize,
    half_lengths: Vec<usize>,
    samples: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let pi = Matching::consecutive(n).map_err(py_err)?;
    let pi1 = pi.with_cycles(&half_lengths).map_err(py_err)?;
    let e = estimators::estimate_conditional_two_point(&pi, &pi1, samples, &RngStream::new(seed, 0))
        .map_err(py_err)?;
    to_dict(py, &e)
}

#[pyfunction]
#[pyo3(signature = (n, samples, seed = 0))]
fn g_pi_frequency<'py>(py: Python<'py>, n: usize, samples: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let f = estimators::estimate_g_pi_frequency(n, samples, &RngStream::new(seed, 0)).map_err(py_err)?;
    to_dict(py, &f)
}

#[pyfunction]
fn lambert_w_branch_minus1(z: f64) -> PyResult<f64> {
    bound_optimizer::lambert_w_branch_minus1(z).map_err(py_err)
}

#[pyfunction]
fn tstar_closed_form(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    to_dict(py, &bound_optimizer::tstar_closed_form())
}

#[pyfunction]
fn tstar_grid_search(py: Python<'_>, resolution: f64) -> PyResult<Bound<'_, PyAny>> {
    let s = bound_optimizer::tstar_grid_search(resolution).map_err(py_err)?;
    to_dict(py, &s)
}

#[pymodule]
fn pyroommates(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProfile>()?;
    m.add_class::<PyMatching>()?;
    m.add_function(wrap_pyfunction!(irving_solve, m)?)?;
    m.add_function(wrap_pyfunction!(is_stable, m)?)?;
    m.add_function(wrap_pyfunction!(blocking_pairs, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_stable, m)?)?;
    m.add_function(wrap_pyfunction!(stable_cycle_neighbors, m)?)?;
    m.add_function(wrap_pyfunction!(symmetric_difference, m)?)?;
    m.add_function(wrap_pyfunction!(double_factorial, m)?)?;
    m.add_function(wrap_pyfunction!(single_cycle_count, m)?)?;
    m.add_function(wrap_pyfunction!(exact_stability_probability, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_expected_x, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_two_point, m)?)?;
    m.add_function(wrap_pyfunction!(g_pi_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(lambert_w_branch_minus1, m)?)?;
    m.add_function(wrap_pyfunction!(tstar_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(tstar_grid_search, m)?)?;
    Ok(())
}
