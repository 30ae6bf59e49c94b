//! Python bindings: simulation, FPCA, dimension selection, baselines and
//! the experiment runner.

use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use flr_core::baselines::{self, BaselineTable};
use flr_core::error::ErrorKind;
use flr_core::estimator::{self, Method, SelectionConfig, DEFAULT_DELTA, DEFAULT_THETA_KNOWN, DEFAULT_THETA_UNKNOWN};
use flr_core::experiment::{self, ExperimentConfig, RateConfig};
use flr_core::fda::{center_sample, Curve, FunctionalSample, Grid};
use flr_core::fpca::{self, FpcaResult};
use flr_core::metrics;
use flr_core::simulator::{Decay, ProcessSpec, ScenarioSpec, Simulator, Slope};
use flr_core::FlrError;

fn to_py(e: FlrError) -> PyErr {
    match e.kind() {
        ErrorKind::Config | ErrorKind::Data => PyValueError::new_err(e.to_string()),
        ErrorKind::Numeric => PyRuntimeError::new_err(e.to_string()),
        ErrorKind::Io => PyIOError::new_err(e.to_string()),
    }
}

fn parse_decay(s: &str) -> PyResult<Decay> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown decay '{s}' (expected P1, P2 or E)")))
}

fn parse_slope(s: &str, r: f64, radius: f64) -> PyResult<Slope> {
    match s {
        "beta1" => Ok(Slope::Beta1),
        "beta2" => Ok(Slope::Beta2),
        "ellipsoid" => Ok(Slope::Ellipsoid { r, radius }),
        other => Err(PyValueError::new_err(format!("unknown slope '{other}'"))),
    }
}

fn selection_config(method: Method, sigma2: Option<f64>, theta: Option<f64>, delta: f64) -> PyResult<SelectionConfig> {
    match (method, sigma2) {
        (Method::Kv, None) => Err(PyValueError::new_err("method 'kv' needs sigma2")),
        (Method::Uv, _) => SelectionConfig::unknown_with(theta.unwrap_or(DEFAULT_THETA_UNKNOWN), delta).map_err(to_py),
        (_, Some(s2)) => SelectionConfig::known_with(s2, theta.unwrap_or(DEFAULT_THETA_KNOWN)).map_err(to_py),
        (_, None) => Ok(SelectionConfig::unknown()),
    }
}

/// Curves on a common grid with scalar responses.
#[pyclass(name = "Sample", module = "flr", frozen)]
struct PySample {
    inner: FunctionalSample,
}

#[pymethods]
impl PySample {
    /// `curves` holds one row of grid values per observation. Set
    /// `centred=True` when the curves come from a mean-zero process.
    #[new]
    #[pyo3(signature = (grid, curves, responses, centred = false))]
    fn new(grid: Vec<f64>, curves: Vec<Vec<f64>>, responses: Vec<f64>, centred: bool) -> PyResult<Self> {
        let grid = Arc::new(Grid::new(grid).map_err(to_py)?);
        let rows = curves
            .into_iter()
            .map(|v| Curve::new(grid.clone(), v))
            .collect::<Result<Vec<_>, _>>()
            .map_err(to_py)?;
        let s = FunctionalSample::from_curves(&rows, responses).map_err(to_py)?;
        Ok(PySample {
            inner: if centred { s.assume_centred() } else { s },
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn grid(&self) -> Vec<f64> {
        self.inner.grid().points().to_vec()
    }

    #[getter]
    fn responses(&self) -> Vec<f64> {
        self.inner.responses().iter().copied().collect()
    }

    #[getter]
    fn curves(&self) -> Vec<Vec<f64>> {
        (0..self.inner.n()).map(|i| self.inner.curve(i).into_values()).collect()
    }

    #[getter]
    fn centering(&self) -> String {
        format!("{:?}", self.inner.centering()).to_lowercase()
    }

    /// Copy with the sample means removed.
    fn centred(&self) -> PyResult<Self> {
        Ok(PySample {
            inner: center_sample(&self.inner).map_err(to_py)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("Sample(n={}, p={}, centering={})", self.inner.n(), self.inner.grid().len(), self.centering())
    }
}

impl PySample {
    fn centred_inner(&self) -> PyResult<FunctionalSample> {
        if self.inner.is_centred() {
            Ok(self.inner.clone())
        } else {
            center_sample(&self.inner).map_err(to_py)
        }
    }
}

/// Draws a sample from a simulation scenario. Returns `(sample, beta)`.
#[pyfunction]
#[pyo3(signature = (decay = "P1", slope = "beta1", n = 200, seed = 0, sigma2 = 0.01, r = 2.0, radius = 1.0, replicate = 0))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    decay: &str,
    slope: &str,
    n: usize,
    seed: u64,
    sigma2: f64,
    r: f64,
    radius: f64,
    replicate: u64,
) -> PyResult<(PySample, Vec<f64>)> {
    let sc = ScenarioSpec {
        sigma2,
        ..ScenarioSpec::new(parse_decay(decay)?, parse_slope(slope, r, radius)?, n, seed)
    };
    let data = Simulator::new(&sc).and_then(|s| s.generate(replicate)).map_err(to_py)?;
    Ok((PySample { inner: data.sample }, data.beta.into_values()))
}

#[pyclass(name = "Fpca", module = "flr", frozen)]
struct PyFpca {
    inner: FpcaResult,
}

#[pymethods]
impl PyFpca {
    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues().to_vec()
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    /// Grid values of the `j`-th eigenfunction (0-based).
    fn eigenfunction(&self, j: usize) -> PyResult<Vec<f64>> {
        if j >= self.inner.len() {
            return Err(PyValueError::new_err(format!("index {j} out of range ({})", self.inner.len())));
        }
        Ok(self.inner.eigenfunction(j).into_values())
    }

    /// Slope estimate in dimension `m`.
    fn beta_hat(&self, m: usize) -> PyResult<Vec<f64>> {
        estimator::beta_hat(&self.inner, m).map(Curve::into_values).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Fpca(rank={}, n={})", self.inner.rank(), self.inner.sample_size())
    }
}

/// Empirical eigen-decomposition; raw samples are centred first.
#[pyfunction]
fn fit_fpca(sample: &PySample) -> PyResult<PyFpca> {
    let s = sample.centred_inner()?;
    Ok(PyFpca {
        inner: fpca::fit_fpca(&s).map_err(to_py)?,
    })
}

#[pyclass(name = "Selection", module = "flr", frozen, get_all)]
struct PySelection {
    method: String,
    selected_m: usize,
    max_dim: usize,
    beta_hat: Vec<f64>,
    /// `(m, score)` for every candidate dimension.
    table: Vec<(usize, f64)>,
}

#[pymethods]
impl PySelection {
    fn __repr__(&self) -> String {
        format!("Selection(method={}, selected_m={}, max_dim={})", self.method, self.selected_m, self.max_dim)
    }
}

fn baseline_selection(t: BaselineTable, max_dim: usize, r: &FpcaResult) -> PyResult<PySelection> {
    Ok(PySelection {
        method: t.method.to_string(),
        selected_m: t.selected_m,
        max_dim,
        beta_hat: estimator::beta_hat(r, t.selected_m).map_err(to_py)?.into_values(),
        table: t.rows.iter().map(|row| (row.m, row.score)).collect(),
    })
}

/// Chooses the projection dimension with `method` in {kv, uv, gcv, cv}.
/// `kv` needs the noise variance; for `gcv`/`cv` a given `sigma2` only
/// sets the candidate range, and `max_m` overrides it.
#[pyfunction]
#[pyo3(signature = (sample, method = "uv", sigma2 = None, theta = None, delta = DEFAULT_DELTA, max_m = None))]
fn select_dimension(
    sample: &PySample,
    method: &str,
    sigma2: Option<f64>,
    theta: Option<f64>,
    delta: f64,
    max_m: Option<usize>,
) -> PyResult<PySelection> {
    let method = Method::parse(method).map_err(to_py)?;
    let cfg = selection_config(method, sigma2, theta, delta)?;
    let s = sample.centred_inner()?;
    let r = fpca::fit_fpca(&s).map_err(to_py)?;
    match method {
        Method::Kv | Method::Uv => {
            let cfg = cfg.with_max_dim_cap(max_m).map_err(to_py)?;
            let sel = estimator::select_dimension(&s, &r, &cfg).map_err(to_py)?;
            Ok(PySelection {
                method: method.to_string(),
                selected_m: sel.selected_m,
                max_dim: sel.max_dim,
                table: sel.table.iter().map(|row| (row.m, row.criterion)).collect(),
                beta_hat: sel.beta_hat.into_values(),
            })
        }
        Method::Gcv | Method::Cv => {
            let max_dim = match max_m {
                Some(m) => m,
                None => estimator::max_dimension(&r, &cfg, s.n()).map_err(to_py)?.min(r.rank()),
            };
            let t = if method == Method::Gcv {
                baselines::gcv_select(&s, &r, max_dim)
            } else {
                baselines::cv_select(&s, max_dim)
            }
            .map_err(to_py)?;
            baseline_selection(t, max_dim, &r)
        }
    }
}

/// Prediction error `sum_j lambda_j <f, psi_j>^2` of `f` under a simulated
/// process (grid size `len(f)`).
#[pyfunction]
#[pyo3(signature = (f, decay = "P1", truncation = 150))]
fn prediction_error(f: Vec<f64>, decay: &str, truncation: usize) -> PyResult<f64> {
    let spec = ProcessSpec {
        decay: parse_decay(decay)?,
        truncation,
        grid_size: f.len(),
    };
    let (l, psi) = flr_core::simulator::eigen_basis(&spec).map_err(to_py)?;
    let curve = Curve::new(psi[0].grid().clone(), f).map_err(to_py)?;
    metrics::gamma_norm_sq(&curve, &l, &psi).map_err(to_py)
}

/// Log-log least-squares slope and intercept through `(n, risk)` pairs.
#[pyfunction]
fn rate_fit(points: Vec<(f64, f64)>) -> PyResult<(f64, f64)> {
    metrics::rate_fit(&points).map_err(to_py)
}

/// Runs an experiment from its JSON configuration; returns the report as
/// JSON.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(to_py)?;
    let report = py.detach(|| experiment::run_experiment(&cfg)).map_err(to_py)?;
    serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Runs a rate study from its JSON configuration; returns the study as JSON.
#[pyfunction]
fn run_rate_study(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg: RateConfig = serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let (study, _) = py.detach(|| experiment::run_rate_study(&cfg)).map_err(to_py)?;
    serde_json::to_string(&study).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn flr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", experiment::VERSION)?;
    m.add_class::<PySample>()?;
    m.add_class::<PyFpca>()?;
    m.add_class::<PySelection>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_fpca, m)?)?;
    m.add_function(wrap_pyfunction!(select_dimension, m)?)?;
    m.add_function(wrap_pyfunction!(prediction_error, m)?)?;
    m.add_function(wrap_pyfunction!(rate_fit, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_rate_study, m)?)?;
    Ok(())
}
