//! Python bindings. Structured results cross the boundary as JSON and are
//! decoded with the standard `json` module, so every dict mirrors the Rust
//! serde layout.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use tailbound_core::dist_bounds::{self, BoundTier};
use tailbound_core::dist_model::{DistSpec, Side};
use tailbound_core::harness::{self, GridOptions, XPolicy};
use tailbound_core::mixture::{self, MixtureSpec};
use tailbound_core::oracle::{exact_tail_with, OracleConfig};
use tailbound_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Parse(_) | Error::Domain(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn side(s: &str) -> PyResult<Side> {
    s.parse().map_err(to_py)
}

fn to_obj<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn tier(name: &str, c: Option<f64>, big_c: Option<f64>) -> PyResult<BoundTier> {
    Ok(match name {
        "certified" | "numeric" => BoundTier::NumericCertified,
        "closed" => BoundTier::ClosedFormCertified,
        "rate" => BoundTier::RateForm { c: c.unwrap_or(1.0), big_c: big_c.unwrap_or(1.0) },
        other => return Err(PyValueError::new_err(format!("unknown tier {other:?}"))),
    })
}

/// A centered distribution, built from its JSON description.
#[pyclass(name = "Dist", frozen)]
struct PyDist {
    spec: DistSpec,
}

#[pymethods]
impl PyDist {
    #[new]
    fn new(json: &str) -> PyResult<Self> {
        let spec = DistSpec::from_json(json).map_err(to_py)?;
        spec.validate().map_err(to_py)?;
        Ok(Self { spec })
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.spec.family()
    }

    #[getter]
    fn variance(&self) -> f64 {
        self.spec.variance()
    }

    fn to_json(&self) -> String {
        self.spec.to_json()
    }

    fn __repr__(&self) -> String {
        format!("Dist({})", self.spec.label())
    }

    /// Reference tail probability with its error model.
    #[pyo3(signature = (side, x, mc_n=1_000_000, seed=42))]
    fn exact_tail<'py>(&self, py: Python<'py>, side: &str, x: f64, mc_n: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let cfg = OracleConfig { mc_n, seed, ..OracleConfig::default() };
        let s = self::side(side)?;
        let r = py.detach(|| exact_tail_with(&self.spec, s, x, &cfg)).map_err(to_py)?;
        to_obj(py, &r)
    }

    fn upper_bound<'py>(&self, py: Python<'py>, side: &str, x: f64) -> PyResult<Bound<'py, PyAny>> {
        let r = dist_bounds::upper_bound(&self.spec, self::side(side)?, x).map_err(to_py)?;
        to_obj(py, &r)
    }

    #[pyo3(signature = (side, x, tier="certified", c=None, big_c=None))]
    fn lower_bound<'py>(
        &self,
        py: Python<'py>,
        side: &str,
        x: f64,
        tier: &str,
        c: Option<f64>,
        big_c: Option<f64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let t = self::tier(tier, c, big_c)?;
        let r = dist_bounds::lower_bound(&self.spec, self::side(side)?, x, t).map_err(to_py)?;
        to_obj(py, &r)
    }

    /// Deviation at which the tail reaches `q`.
    #[pyo3(signature = (side, q, mc_n=1_000_000, seed=42))]
    fn quantile<'py>(&self, py: Python<'py>, side: &str, q: f64, mc_n: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let cfg = OracleConfig { mc_n, seed, ..OracleConfig::default() };
        let s = self::side(side)?;
        let r = py.detach(|| harness::bisect_quantile_with(&self.spec, s, q, &cfg)).map_err(to_py)?;
        to_obj(py, &r)
    }
}

/// Two-intensity Poisson mixture and its optimal threshold classifier.
#[pyclass(name = "Mixture", frozen)]
struct PyMixture {
    spec: MixtureSpec,
}

#[pymethods]
impl PyMixture {
    #[new]
    fn new(mu: f64, lam: f64, eps: f64) -> PyResult<Self> {
        Ok(Self { spec: MixtureSpec::new(mu, lam, eps).map_err(to_py)? })
    }

    #[getter]
    fn theta_tilde(&self) -> f64 {
        self.spec.theta_tilde()
    }

    #[getter]
    fn eps_plus(&self) -> f64 {
        self.spec.eps_plus()
    }

    #[getter]
    fn eps_minus(&self) -> f64 {
        self.spec.eps_minus()
    }

    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_obj(py, &mixture::derive_classifier(&self.spec).map_err(to_py)?)
    }

    fn classify(&self, counts: Vec<u64>) -> Vec<bool> {
        mixture::classify(&self.spec, &counts)
    }

    #[pyo3(signature = (k, seed=42))]
    fn mc_misid<'py>(&self, py: Python<'py>, k: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let r = py.detach(|| mixture::mc_misid(&self.spec, k, seed)).map_err(to_py)?;
        to_obj(py, &r)
    }
}

/// Certification sweep over the default families; returns the report dict.
#[pyfunction]
#[pyo3(signature = (families=None, quantiles=None, seed=42, mc_n=1_000_000))]
fn verify<'py>(
    py: Python<'py>,
    families: Option<Vec<String>>,
    quantiles: Option<Vec<f64>>,
    seed: u64,
    mc_n: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let mut fams = harness::default_families();
    if let Some(names) = families {
        fams.retain(|s| names.iter().any(|n| n == s.family()));
        if fams.is_empty() {
            return Err(PyValueError::new_err("no family selected"));
        }
    }
    let policy = XPolicy::QuantileGrid(quantiles.unwrap_or_else(|| harness::DEFAULT_QUANTILES.to_vec()));
    let opts = GridOptions { mc_n, timestamp: false, ..GridOptions::default() };
    let rep = py
        .detach(|| harness::run_grid_with(&fams, &policy, &harness::default_tiers(), seed, &opts))
        .map_err(to_py)?;
    to_obj(py, &rep)
}

#[pymodule]
fn tailbound(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDist>()?;
    m.add_class::<PyMixture>()?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
