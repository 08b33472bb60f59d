//! Python bindings: the stationary profile, single-fibre evolution, the
//! diagnostics bundle, and the scenario runner. Thin wrappers; all the
//! numerics stay in the core crate.

use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use coag_core::diagnostics;
use coag_core::experiments::{self, ExperimentConfig, Scenario};
use coag_core::fibre::{init_fibre_auto, FibreState};
use coag_core::model::ModelParams;
use coag_core::profile::{sigma_root, ProfileBuilder, StationaryProfile};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Model constants for one homogeneity exponent.
#[pyclass(frozen)]
struct Params {
    inner: ModelParams,
}

#[pymethods]
impl Params {
    #[new]
    fn new(gamma: f64) -> PyResult<Self> {
        ModelParams::new(gamma)
            .map(|inner| Params { inner })
            .map_err(value_err)
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    #[getter]
    fn plateau(&self) -> f64 {
        self.inner.plateau()
    }

    fn __repr__(&self) -> String {
        format!(
            "Params(gamma={}, alpha={}, plateau={})",
            self.inner.gamma(),
            self.inner.alpha(),
            self.inner.plateau()
        )
    }
}

/// Positive root of the decay-exponent equation for the given gamma.
#[pyfunction]
fn sigma(gamma: f64) -> PyResult<f64> {
    let p = ModelParams::new(gamma).map_err(value_err)?;
    sigma_root(&p).map_err(value_err)
}

/// The stationary profile table, normalized to unit lattice mass unless
/// built with normalized=False.
#[pyclass(frozen)]
struct Profile {
    inner: StationaryProfile,
}

#[pymethods]
impl Profile {
    #[new]
    #[pyo3(signature = (gamma = 0.0, dx = 1.0 / 1024.0, amplitude = 1.0, normalized = true))]
    fn new(gamma: f64, dx: f64, amplitude: f64, normalized: bool) -> PyResult<Self> {
        let params = ModelParams::new(gamma).map_err(value_err)?;
        let builder = ProfileBuilder::new(params).dx(dx).amplitude(amplitude);
        let inner = if normalized {
            builder.build()
        } else {
            builder.build_raw()
        }
        .map_err(value_err)?;
        Ok(Profile { inner })
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma()
    }

    #[getter]
    fn plateau(&self) -> f64 {
        self.inner.plateau()
    }

    #[getter]
    fn x_end(&self) -> f64 {
        self.inner.x_end()
    }

    fn eval(&self, x: f64) -> f64 {
        self.inner.eval(x)
    }

    fn eval_many(&self, xs: Vec<f64>) -> Vec<f64> {
        xs.into_iter().map(|x| self.inner.eval(x)).collect()
    }

    /// Weighted lattice sum at the given phase; 1 for the normalized table.
    fn lattice_sum(&self, theta: f64) -> f64 {
        self.inner.lattice_sum(theta)
    }

    fn integral_identity_residual(&self) -> f64 {
        self.inner.integral_identity_residual()
    }

    /// (C, L) with hbar ~ C exp(-L 2^x) over the last two resolved units.
    fn tail_fit(&self) -> (f64, f64) {
        self.inner.tail_fit()
    }

    fn export(&self, csv_path: &str, meta_path: &str) -> PyResult<()> {
        self.inner
            .write_csv(Path::new(csv_path))
            .and_then(|_| self.inner.write_meta(Path::new(meta_path)))
            .map_err(runtime_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Profile(sigma={}, plateau={}, x_end={})",
            self.inner.sigma(),
            self.inner.plateau(),
            self.inner.x_end()
        )
    }
}

/// One fibre of the decomposition: lattice values plus the segment clock.
#[pyclass]
struct Fibre {
    inner: FibreState,
}

#[pymethods]
impl Fibre {
    /// Sample hbar(x - lam) * (1 + eps sin 2 pi x) on the fibre's lattice.
    #[staticmethod]
    #[pyo3(signature = (profile, theta, lam = 0.0, eps = 0.0))]
    fn from_profile(profile: &Profile, theta: f64, lam: f64, eps: f64) -> PyResult<Self> {
        let h0 = |x: f64| {
            profile.inner.eval(x - lam)
                * (1.0 + eps * (2.0 * std::f64::consts::PI * x).sin())
        };
        init_fibre_auto(h0, theta, *profile.inner.params())
            .map(|inner| Fibre { inner })
            .map_err(value_err)
    }

    /// Sample an arbitrary callable x -> h0(x) >= 0 on the fibre's lattice.
    #[staticmethod]
    fn from_callable(f: Bound<'_, PyAny>, theta: f64, gamma: f64) -> PyResult<Self> {
        let params = ModelParams::new(gamma).map_err(value_err)?;
        let h0 = |x: f64| {
            f.call1((x,))
                .and_then(|v| v.extract::<f64>())
                .unwrap_or(f64::NAN)
        };
        init_fibre_auto(h0, theta, params)
            .map(|inner| Fibre { inner })
            .map_err(value_err)
    }

    fn evolve(&mut self, t_end: f64, dt_max: f64) -> PyResult<()> {
        self.inner.evolve(t_end, dt_max).map_err(runtime_err)
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta()
    }

    #[getter]
    fn t(&self) -> f64 {
        self.inner.t()
    }

    #[getter]
    fn psi(&self) -> f64 {
        self.inner.psi()
    }

    #[getter]
    fn m0(&self) -> f64 {
        self.inner.m0()
    }

    #[getter]
    fn k_min(&self) -> i64 {
        self.inner.k_min()
    }

    #[getter]
    fn k_max(&self) -> i64 {
        self.inner.k_max()
    }

    /// Window values phi_k, k = k_min ..= k_max.
    fn phi(&self) -> Vec<f64> {
        self.inner.phi()
    }

    fn weighted_mass(&self) -> f64 {
        self.inner.weighted_mass()
    }

    fn mass_residual(&self) -> f64 {
        self.inner.mass_residual()
    }

    /// Lyapunov bundle against the profile shifted by ln(m0)/alpha.
    fn diagnostics<'py>(
        &self,
        py: Python<'py>,
        profile: &Profile,
    ) -> PyResult<Bound<'py, PyDict>> {
        let d = diagnostics::sample(&self.inner, &profile.inner, i64::MAX);
        let out = PyDict::new(py);
        out.set_item("theta", d.theta)?;
        out.set_item("t", d.t)?;
        out.set_item("psi", d.psi)?;
        out.set_item("lambda", d.lambda)?;
        out.set_item("lyapunov", d.lyapunov)?;
        out.set_item("dissipation", d.dissipation)?;
        out.set_item("dist", d.dist)?;
        out.set_item("mass", d.mass)?;
        out.set_item("trace_mass", d.trace_mass)?;
        out.set_item("tail", d.tail)?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!(
            "Fibre(theta={}, t={}, window=[{}, {}])",
            self.inner.theta(),
            self.inner.t(),
            self.inner.k_min(),
            self.inner.k_max()
        )
    }
}

/// Run one scenario; returns the report as a JSON string.
#[pyfunction]
#[pyo3(signature = (scenario, config_json = "{}", out_dir = "out"))]
fn run_scenario(scenario: &str, config_json: &str, out_dir: &str) -> PyResult<String> {
    let sc: Scenario = serde_json::from_value(serde_json::Value::String(scenario.into()))
        .map_err(|_| PyValueError::new_err(format!("unknown scenario: {scenario}")))?;
    let cfg: ExperimentConfig = serde_json::from_str(config_json).map_err(value_err)?;
    let report = experiments::run(sc, &cfg, Path::new(out_dir)).map_err(runtime_err)?;
    serde_json::to_string_pretty(&report).map_err(runtime_err)
}

#[pymodule]
fn coag_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Params>()?;
    m.add_class::<Profile>()?;
    m.add_class::<Fibre>()?;
    m.add_function(wrap_pyfunction!(sigma, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
