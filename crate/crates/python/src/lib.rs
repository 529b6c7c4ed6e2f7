//! Python bindings for `lmar`.
//!
//! Series are plain lists of floats and 3D traces are lists of `[x, y, z]`.
//! Library errors surface as `lmar_py.LmarError`, a subclass of `ValueError`.

use lmar::cli::io::ModelFile;
use lmar::pipeline::evaluate::{
    rolling_evaluate, EvalSplit, Forecaster, LmarForecaster, MetricsTable, RidgeForecaster,
};
use lmar::pipeline::{
    grid_search_corpus, pca_fit, pca_project, pca_reconstruct, ridge_fit, ridge_predict,
    synth_trace, Hyper, MethodGrid, PcaBasis, RidgeModel, SynthConfig,
};
use lmar::{
    derive_params, mixture_cdf, mixture_quantile, point_forecast, prediction_interval,
    FitConfig, FittedModel, GaussianMixture, LmarPredictor, MixtureParam, TimeSeries,
};
use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

create_exception!(lmar_py, LmarError, PyValueError);

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    LmarError::new_err(e.to_string())
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(err("sigma must be a nonempty square matrix"));
    }
    Ok(DMatrix::from_fn(n, n, |r, c| rows[r][c]))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

/// Symmetric positive definite covariance of a window of `p + 1` values.
#[pyclass(name = "MixtureParam", module = "lmar_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyMixtureParam {
    inner: MixtureParam,
}

#[pymethods]
impl PyMixtureParam {
    #[new]
    fn new(sigma: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = MixtureParam::new(matrix_from_rows(&sigma)?).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn sigma(&self) -> Vec<Vec<f64>> {
        matrix_rows(self.inner.sigma())
    }

    /// Autoregressive coefficients, oldest lag first.
    #[getter]
    fn gamma(&self) -> PyResult<Vec<f64>> {
        Ok(derive_params(&self.inner).map_err(err)?.gamma)
    }

    /// Component variance.
    #[getter]
    fn sigma2(&self) -> PyResult<f64> {
        Ok(derive_params(&self.inner).map_err(err)?.sigma2)
    }

    fn __repr__(&self) -> String {
        format!("MixtureParam(p={})", self.inner.p())
    }
}

#[pyclass(name = "GaussianMixture", module = "lmar_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyGaussianMixture {
    inner: GaussianMixture,
}

#[pymethods]
impl PyGaussianMixture {
    /// Components share one variance; lags are labelled 1..n.
    #[new]
    fn new(weights: Vec<f64>, means: Vec<f64>, variance: f64) -> PyResult<Self> {
        let labels = (1..=weights.len()).collect();
        let inner = GaussianMixture::new(weights, means, variance, labels).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn means(&self) -> Vec<f64> {
        self.inner.means().to_vec()
    }

    #[getter]
    fn variance(&self) -> f64 {
        self.inner.common_variance()
    }

    #[getter]
    fn lags(&self) -> Vec<usize> {
        self.inner.lag_labels().to_vec()
    }

    fn mean(&self) -> f64 {
        point_forecast(&self.inner)
    }

    fn cdf(&self, y: f64) -> f64 {
        mixture_cdf(&self.inner, y)
    }

    fn quantile(&self, q: f64) -> PyResult<f64> {
        mixture_quantile(&self.inner, q).map_err(err)
    }

    #[pyo3(signature = (level=0.9))]
    fn interval(&self, level: f64) -> PyResult<(f64, f64)> {
        prediction_interval(&self.inner, level).map_err(err)
    }

    fn log_score(&self, y: f64) -> f64 {
        lmar::log_score(&self.inner, y)
    }

    #[pyo3(signature = (n, seed=0))]
    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.inner.sample(&mut rng)).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "GaussianMixture(components={}, variance={})",
            self.inner.len(),
            self.inner.common_variance()
        )
    }
}

#[pyclass(name = "Forecast", module = "lmar_py", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
pub struct PyForecast {
    horizon: usize,
    point: f64,
    lo: f64,
    hi: f64,
    level: f64,
    mixture: PyGaussianMixture,
}

impl From<lmar::Forecast> for PyForecast {
    fn from(f: lmar::Forecast) -> Self {
        Self {
            horizon: f.horizon_k,
            point: f.point,
            lo: f.interval.lo,
            hi: f.interval.hi,
            level: f.interval.level,
            mixture: PyGaussianMixture { inner: f.mixture },
        }
    }
}

#[pymethods]
impl PyForecast {
    fn __repr__(&self) -> String {
        format!(
            "Forecast(horizon={}, point={}, interval=({}, {}))",
            self.horizon, self.point, self.lo, self.hi
        )
    }
}

/// Streaming forecaster: holds the history and updates in O(p^2) per value.
#[pyclass(name = "Predictor", module = "lmar_py")]
pub struct PyPredictor {
    inner: LmarPredictor,
}

#[pymethods]
impl PyPredictor {
    #[new]
    fn new(sigma: &PyMixtureParam, history: Vec<f64>) -> PyResult<Self> {
        let inner = LmarPredictor::new(sigma.inner.clone(), &history).map_err(err)?;
        Ok(Self { inner })
    }

    fn observe(&mut self, y: f64) -> PyResult<()> {
        self.inner.observe(y).map_err(err)
    }

    fn predictive(&self, k: usize) -> PyResult<PyGaussianMixture> {
        let inner = self.inner.predictive(k).map_err(err)?;
        Ok(PyGaussianMixture { inner })
    }

    #[pyo3(signature = (k, level=0.9))]
    fn forecast(&self, k: usize, level: f64) -> PyResult<PyForecast> {
        Ok(self.inner.forecast(k, level).map_err(err)?.into())
    }

    #[getter]
    fn history(&self) -> Vec<f64> {
        self.inner.history().to_vec()
    }
}

#[pyclass(name = "FittedModel", module = "lmar_py", frozen)]
pub struct PyFittedModel {
    inner: FittedModel,
    sample_rate_hz: f64,
}

#[pymethods]
impl PyFittedModel {
    #[getter]
    fn sigma(&self) -> PyMixtureParam {
        PyMixtureParam {
            inner: self.inner.sigma_hat.clone(),
        }
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn monitor_trace(&self) -> Vec<f64> {
        self.inner.monitor_trace.clone()
    }

    #[getter]
    fn exact_loglik(&self) -> f64 {
        self.inner.exact_loglik_final
    }

    #[getter]
    fn jitter_applied(&self) -> bool {
        self.inner.jitter_applied
    }

    fn predictor(&self, history: Vec<f64>) -> PyResult<PyPredictor> {
        PyPredictor::new(&self.sigma(), history)
    }

    #[pyo3(signature = (history, k, level=0.9))]
    fn forecast(&self, history: Vec<f64>, k: usize, level: f64) -> PyResult<PyForecast> {
        self.predictor(history)?.forecast(k, level)
    }

    /// `n` new values following the last `m` values of `history` (zeros if omitted).
    #[pyo3(signature = (n, seed=0, history=None))]
    fn simulate(&self, n: usize, seed: u64, history: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
        simulate(&self.sigma(), self.inner.m, history.unwrap_or_else(|| vec![0.0; self.inner.m]), n, seed)
    }

    fn to_json(&self) -> String {
        ModelFile::from_lmar(&self.inner, self.sample_rate_hz, None).to_json()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let file = ModelFile::from_json(text).map_err(err)?;
        let (sigma, m) = file.lmar().map_err(err)?;
        Ok(Self {
            inner: FittedModel::from_sigma(sigma, m),
            sample_rate_hz: file.sample_rate_hz,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "FittedModel(p={}, m={}, iterations={}, converged={})",
            self.inner.p, self.inner.m, self.inner.iterations, self.inner.converged
        )
    }
}

/// Fits `Σ` by EM. The first `m` values serve only as history.
#[pyfunction]
#[pyo3(signature = (values, p=22, m=400, tol=1e-4, max_iter=100, sample_rate_hz=30.0))]
fn fit(
    py: Python<'_>,
    values: Vec<f64>,
    p: usize,
    m: usize,
    tol: f64,
    max_iter: usize,
    sample_rate_hz: f64,
) -> PyResult<PyFittedModel> {
    let series = TimeSeries::with_origin(values, sample_rate_hz, m).map_err(err)?;
    let config = FitConfig {
        rel_tol: tol,
        max_iter,
        ..FitConfig::default()
    };
    let inner = py
        .detach(|| lmar::fit(&series, p, m, &config))
        .map_err(err)?;
    Ok(PyFittedModel {
        inner,
        sample_rate_hz,
    })
}

/// `n` values simulated after the last `m` values of `history`.
#[pyfunction]
#[pyo3(signature = (sigma, m, history, n, seed=0))]
fn simulate(sigma: &PyMixtureParam, m: usize, history: Vec<f64>, n: usize, seed: u64) -> PyResult<Vec<f64>> {
    let seed_series = TimeSeries::new(history).map_err(err)?;
    let s = lmar::simulate(&sigma.inner, m, &seed_series, n, seed).map_err(err)?;
    Ok(s.values()[m..].to_vec())
}

#[pyclass(name = "RidgeModel", module = "lmar_py", frozen)]
pub struct PyRidgeModel {
    inner: RidgeModel,
}

#[pymethods]
impl PyRidgeModel {
    #[getter]
    fn p(&self) -> usize {
        self.inner.p
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn intercept(&self) -> f64 {
        self.inner.beta0
    }

    /// Slopes, oldest input first.
    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.inner.beta.clone()
    }

    #[getter]
    fn resid_variance(&self) -> f64 {
        self.inner.resid_variance
    }

    #[pyo3(signature = (history, level=0.9))]
    fn forecast(&self, history: Vec<f64>, level: f64) -> PyResult<PyForecast> {
        Ok(ridge_predict(&self.inner, &history, level).map_err(err)?.into())
    }
}

/// Ridge autoregression of `Y_{t+k}` on the last `p` values.
#[pyfunction]
#[pyo3(signature = (values, p, k, lam=1.0))]
fn fit_ridge(values: Vec<f64>, p: usize, k: usize, lam: f64) -> PyResult<PyRidgeModel> {
    let inner = ridge_fit(&values, p, k, lam).map_err(err)?;
    Ok(PyRidgeModel { inner })
}

#[pyclass(name = "PcaBasis", module = "lmar_py", frozen)]
pub struct PyPcaBasis {
    inner: PcaBasis,
}

#[pymethods]
impl PyPcaBasis {
    #[getter]
    fn mean(&self) -> [f64; 3] {
        self.inner.mean
    }

    #[getter]
    fn components(&self) -> [[f64; 3]; 3] {
        self.inner.components
    }

    #[getter]
    fn explained_ratio(&self) -> [f64; 3] {
        self.inner.explained_ratio()
    }

    /// Scores as three lists, first principal component first.
    fn project(&self, points: Vec<[f64; 3]>) -> Vec<Vec<f64>> {
        pca_project(&self.inner, &points)
    }

    fn reconstruct(&self, scores: Vec<Vec<f64>>) -> PyResult<Vec<[f64; 3]>> {
        pca_reconstruct(&self.inner, &scores).map_err(err)
    }
}

#[pyfunction]
#[pyo3(name = "pca_fit")]
fn py_pca_fit(points: Vec<[f64; 3]>) -> PyResult<PyPcaBasis> {
    Ok(PyPcaBasis {
        inner: pca_fit(&points).map_err(err)?,
    })
}

/// Synthetic breathing-like 3D trace. `config` is a JSON object with any of
/// the generator's fields; `seed` overrides its `rng_seed`.
#[pyfunction]
#[pyo3(signature = (config=None, seed=None))]
fn synth(config: Option<&str>, seed: Option<u64>) -> PyResult<Vec<[f64; 3]>> {
    let mut cfg: SynthConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(err)?,
        None => SynthConfig::default(),
    };
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    Ok(synth_trace(&cfg).map_err(err)?.points)
}

fn table_rows<'py>(py: Python<'py>, table: &MetricsTable) -> PyResult<Vec<Bound<'py, PyDict>>> {
    table
        .rows
        .iter()
        .map(|row| {
            let d = PyDict::new(py);
            d.set_item("method", &row.method)?;
            d.set_item("horizon", row.horizon)?;
            if let Some(m) = &row.metrics {
                d.set_item("rmse", m.rmse)?;
                d.set_item("mae", m.mae)?;
                d.set_item("best_fraction", m.best_fraction)?;
                d.set_item("coverage90", m.coverage90)?;
                d.set_item("log_score", m.mean_log_score)?;
                d.set_item("n", m.n)?;
            }
            d.set_item("failure", &row.failure)?;
            Ok(d)
        })
        .collect()
}

/// Rolling-origin comparison of LMAR and ridge on one series. Returns one
/// dict per (method, horizon).
#[pyfunction]
#[pyo3(signature = (
    values,
    horizons=vec![6, 12, 18],
    lmar_p=22,
    lmar_m=400,
    ridge_p=22,
    ridge_lambda=1.0,
    train_len=1200,
    test_len=1200,
    sample_rate_hz=30.0,
))]
#[allow(clippy::too_many_arguments)]
fn evaluate<'py>(
    py: Python<'py>,
    values: Vec<f64>,
    horizons: Vec<usize>,
    lmar_p: usize,
    lmar_m: usize,
    ridge_p: usize,
    ridge_lambda: f64,
    train_len: usize,
    test_len: usize,
    sample_rate_hz: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let lmar_f = LmarForecaster::new(lmar_p, lmar_m);
    let ridge_f = RidgeForecaster::new(ridge_p, ridge_lambda);
    let methods: [&dyn Forecaster; 2] = [&lmar_f, &ridge_f];
    let split = EvalSplit {
        train_len,
        test_len,
    };
    let table = py
        .detach(|| rolling_evaluate(&values, sample_rate_hz, &methods, &horizons, split))
        .map_err(err)?;
    table_rows(py, &table)
}

fn hyper_dict<'py>(py: Python<'py>, h: &Hyper) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("method", h.method())?;
    match *h {
        Hyper::Lmar { p, m } => {
            d.set_item("p", p)?;
            d.set_item("m", m)?;
        }
        Hyper::Ridge { p, lambda } => {
            d.set_item("p", p)?;
            d.set_item("lambda", lambda)?;
        }
    }
    Ok(d)
}

/// Grid search at horizon `k` over one or more series. `method` is "lmar"
/// (grid over `ps` and `ms`) or "ridge" (grid over `ps` and `lambdas`).
#[pyfunction]
#[pyo3(signature = (series, method, ps, k=12, ms=vec![400], lambdas=vec![1e-2, 1.0, 1e2, 1e4], sample_rate_hz=30.0))]
#[allow(clippy::too_many_arguments)]
fn tune<'py>(
    py: Python<'py>,
    series: Vec<Vec<f64>>,
    method: &str,
    ps: Vec<usize>,
    k: usize,
    ms: Vec<usize>,
    lambdas: Vec<f64>,
    sample_rate_hz: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let grid = match method {
        "lmar" => MethodGrid::Lmar {
            ps,
            ms,
            fit: FitConfig::default(),
        },
        "ridge" => MethodGrid::Ridge { ps, lambdas },
        other => return Err(err(format!("unknown method '{other}'"))),
    };
    let refs: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
    let mut results = py
        .detach(|| grid_search_corpus(&refs, sample_rate_hz, k, &[grid]))
        .map_err(err)?;
    let best = results.remove(0);
    let d = PyDict::new(py);
    d.set_item("best", hyper_dict(py, &best.best)?)?;
    d.set_item("mae", best.mae)?;
    d.set_item("rmse", best.rmse)?;
    Ok(d)
}

#[pymodule]
pub fn lmar_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LmarError", m.py().get_type::<LmarError>())?;
    m.add_class::<PyMixtureParam>()?;
    m.add_class::<PyGaussianMixture>()?;
    m.add_class::<PyForecast>()?;
    m.add_class::<PyPredictor>()?;
    m.add_class::<PyFittedModel>()?;
    m.add_class::<PyRidgeModel>()?;
    m.add_class::<PyPcaBasis>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_ridge, m)?)?;
    m.add_function(wrap_pyfunction!(py_pca_fit, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(tune, m)?)?;
    Ok(())
}
