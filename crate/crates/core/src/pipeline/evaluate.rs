//! Rolling-origin evaluation.
//!
//! Each method is fitted once on the training prefix and then fed the test
//! values one at a time. At origin `t` (every test index) it forecasts
//! `Y_{t+k}` having seen `Y_0..=Y_t` and nothing later; the harness only hands
//! over a value after all forecasts made before it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LmarError, Result};
use crate::estimation::{fit, FitConfig};
use crate::forecast::{Forecast, LmarPredictor};
use crate::numeric::median;
use crate::pipeline::ridge::{ridge_fit_with, ridge_predict, RidgeModel, RidgeOptions};
use crate::pipeline::split::{DEFAULT_TEST_LEN, DEFAULT_TRAIN_LEN};
use crate::series::TimeSeries;

/// Interval level behind the coverage metric.
pub const COVERAGE_LEVEL: f64 = 0.9;

/// Default horizons in steps (0.2, 0.4 and 0.6 s at 30 Hz).
pub const DEFAULT_HORIZONS: [usize; 3] = [6, 12, 18];

/// A forecasting method with fixed hyperparameters.
pub trait Forecaster: Send + Sync {
    fn name(&self) -> String;

    /// Fits on `train` and returns a forecaster conditioned on it that can
    /// serve every horizon in `horizons`.
    fn fit(
        &self,
        train: &[f64],
        sample_rate_hz: f64,
        horizons: &[usize],
    ) -> Result<Box<dyn OnlineForecaster>>;
}

/// A fitted method that is updated one observation at a time.
pub trait OnlineForecaster: Send {
    fn observe(&mut self, y: f64) -> Result<()>;
    /// Forecast of the value `k` steps after the last observation.
    fn forecast(&self, k: usize, level: f64) -> Result<Forecast>;
}

/// LMAR with `Σ` fitted by EM on the training window. The first `m` training
/// values only serve as conditioning history.
#[derive(Debug, Clone)]
pub struct LmarForecaster {
    pub p: usize,
    pub m: usize,
    pub config: FitConfig,
}

impl LmarForecaster {
    pub fn new(p: usize, m: usize) -> Self {
        Self {
            p,
            m,
            config: FitConfig::default(),
        }
    }
}

impl Forecaster for LmarForecaster {
    fn name(&self) -> String {
        "lmar".into()
    }

    fn fit(
        &self,
        train: &[f64],
        sample_rate_hz: f64,
        horizons: &[usize],
    ) -> Result<Box<dyn OnlineForecaster>> {
        if let Some(&k) = horizons.iter().find(|&&k| k == 0 || k > self.p) {
            return Err(LmarError::HorizonOutOfRange { k, max: self.p });
        }
        if train.len() <= self.m {
            return Err(LmarError::SeriesTooShort(format!(
                "training window of {} values leaves no targets with m = {}",
                train.len(),
                self.m
            )));
        }
        let series = TimeSeries::with_origin(train.to_vec(), sample_rate_hz, self.m)?;
        let model = fit(&series, self.p, self.m, &self.config)?;
        Ok(Box::new(LmarPredictor::new(model.sigma_hat, train)?))
    }
}

impl OnlineForecaster for LmarPredictor {
    fn observe(&mut self, y: f64) -> Result<()> {
        LmarPredictor::observe(self, y)
    }

    fn forecast(&self, k: usize, level: f64) -> Result<Forecast> {
        LmarPredictor::forecast(self, k, level)
    }
}

/// Ridge autoregression, one model per horizon.
#[derive(Debug, Clone)]
pub struct RidgeForecaster {
    pub p: usize,
    pub lambda: f64,
    pub options: RidgeOptions,
}

impl RidgeForecaster {
    pub fn new(p: usize, lambda: f64) -> Self {
        Self {
            p,
            lambda,
            options: RidgeOptions::default(),
        }
    }
}

struct OnlineRidge {
    models: Vec<RidgeModel>,
    history: Vec<f64>,
}

impl Forecaster for RidgeForecaster {
    fn name(&self) -> String {
        "ridge".into()
    }

    fn fit(
        &self,
        train: &[f64],
        _sample_rate_hz: f64,
        horizons: &[usize],
    ) -> Result<Box<dyn OnlineForecaster>> {
        let models = horizons
            .iter()
            .map(|&k| ridge_fit_with(train, self.p, k, self.lambda, self.options))
            .collect::<Result<Vec<_>>>()?;
        Ok(Box::new(OnlineRidge {
            models,
            history: train[train.len().saturating_sub(self.p)..].to_vec(),
        }))
    }
}

impl OnlineForecaster for OnlineRidge {
    fn observe(&mut self, y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(LmarError::InvalidSeries(format!("non-finite observation {y}")));
        }
        self.history.push(y);
        let p = self.models.first().map_or(0, |m| m.p);
        if self.history.len() > 4 * p.max(1) {
            self.history.drain(..self.history.len() - p);
        }
        Ok(())
    }

    fn forecast(&self, k: usize, level: f64) -> Result<Forecast> {
        let model = self
            .models
            .iter()
            .find(|m| m.k == k)
            .ok_or(LmarError::HorizonOutOfRange { k, max: 0 })?;
        ridge_predict(model, &self.history, level)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSplit {
    pub train_len: usize,
    pub test_len: usize,
}

impl Default for EvalSplit {
    fn default() -> Self {
        Self {
            train_len: DEFAULT_TRAIN_LEN,
            test_len: DEFAULT_TEST_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    /// Median absolute error.
    pub mae: f64,
    pub best_fraction: f64,
    pub coverage90: f64,
    pub mean_log_score: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub horizon: usize,
    /// `None` when the method failed; see `failure`.
    pub metrics: Option<Metrics>,
    pub failure: Option<String>,
}

/// One row per (method, horizon), grouped by horizon in the order requested
/// and by method in the order given.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn get(&self, method: &str, horizon: usize) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.horizon == horizon)
    }

    pub fn metrics(&self, method: &str, horizon: usize) -> Option<&Metrics> {
        self.get(method, horizon).and_then(|r| r.metrics.as_ref())
    }

    /// Averages per-series metrics cell by cell; `n` is the total number of
    /// predictions. Failed cells are skipped, and a cell that failed
    /// everywhere stays failed. Rows follow the first table's order.
    pub fn average(tables: &[MetricsTable]) -> MetricsTable {
        let mut keys: Vec<(String, usize)> = Vec::new();
        for t in tables {
            for r in &t.rows {
                if !keys.iter().any(|(m, h)| *m == r.method && *h == r.horizon) {
                    keys.push((r.method.clone(), r.horizon));
                }
            }
        }
        let rows = keys
            .into_iter()
            .map(|(method, horizon)| {
                let ok: Vec<&Metrics> = tables
                    .iter()
                    .filter_map(|t| t.metrics(&method, horizon))
                    .collect();
                if ok.is_empty() {
                    let failure = tables
                        .iter()
                        .find_map(|t| t.get(&method, horizon).and_then(|r| r.failure.clone()));
                    return MetricsRow {
                        method,
                        horizon,
                        metrics: None,
                        failure,
                    };
                }
                let c = ok.len() as f64;
                let avg = |f: fn(&Metrics) -> f64| ok.iter().map(|m| f(m)).sum::<f64>() / c;
                MetricsRow {
                    method,
                    horizon,
                    metrics: Some(Metrics {
                        rmse: avg(|m| m.rmse),
                        mae: avg(|m| m.mae),
                        best_fraction: avg(|m| m.best_fraction),
                        coverage90: avg(|m| m.coverage90),
                        mean_log_score: avg(|m| m.mean_log_score),
                        n: ok.iter().map(|m| m.n).sum(),
                    }),
                    failure: None,
                }
            })
            .collect();
        MetricsTable { rows }
    }
}

/// Point, interval hit and log score for every origin at one horizon.
struct Trajectory {
    errors: Vec<f64>,
    covered: Vec<bool>,
    scores: Vec<f64>,
}

fn run_method(
    method: &dyn Forecaster,
    values: &[f64],
    sample_rate_hz: f64,
    horizons: &[usize],
    split: EvalSplit,
) -> Result<Vec<Trajectory>> {
    let train = &values[..split.train_len];
    let mut online = method.fit(train, sample_rate_hz, horizons)?;
    let mut out: Vec<Trajectory> = horizons
        .iter()
        .map(|_| Trajectory {
            errors: Vec::with_capacity(split.test_len),
            covered: Vec::with_capacity(split.test_len),
            scores: Vec::with_capacity(split.test_len),
        })
        .collect();
    for t in split.train_len..split.train_len + split.test_len {
        online.observe(values[t])?;
        for (traj, &k) in out.iter_mut().zip(horizons) {
            let mut f = online.forecast(k, COVERAGE_LEVEL)?;
            let truth = values[t + k];
            traj.errors.push(truth - f.point);
            traj.covered.push(f.interval.contains(truth));
            traj.scores.push(f.score(truth));
        }
    }
    Ok(out)
}

/// Fits every method on the training prefix and scores its forecasts from
/// each test index `t` of `Y_{t+k}`, for every `k` in `horizons`. The series
/// must extend `max(horizons)` values past the test window.
///
/// A method that fails to fit or to forecast at any origin is reported as
/// failed and left out of the best-fraction comparison.
pub fn rolling_evaluate(
    values: &[f64],
    sample_rate_hz: f64,
    methods: &[&dyn Forecaster],
    horizons: &[usize],
    split: EvalSplit,
) -> Result<MetricsTable> {
    if methods.is_empty() {
        return Err(LmarError::InvalidParameter("no methods to evaluate".into()));
    }
    if horizons.is_empty() || horizons.contains(&0) {
        return Err(LmarError::InvalidParameter(
            "horizons must be a nonempty list of positive steps".into(),
        ));
    }
    let names: Vec<String> = methods.iter().map(|m| m.name()).collect();
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(LmarError::InvalidParameter(format!("duplicate method name {n}")));
        }
    }
    if split.train_len == 0 || split.test_len == 0 {
        return Err(LmarError::InvalidParameter(
            "train and test lengths must be positive".into(),
        ));
    }
    let max_k = *horizons.iter().max().expect("nonempty");
    let need = split.train_len + split.test_len + max_k;
    if values.len() < need {
        return Err(LmarError::SeriesTooShort(format!(
            "{} observations, evaluation needs {need}",
            values.len()
        )));
    }
    if let Some(pos) = values[..need].iter().position(|v| !v.is_finite()) {
        return Err(LmarError::InvalidSeries(format!("non-finite value at position {pos}")));
    }

    let results: Vec<Result<Vec<Trajectory>>> = methods
        .par_iter()
        .map(|m| run_method(*m, values, sample_rate_hz, horizons, split))
        .collect();

    let mut rows = Vec::with_capacity(methods.len() * horizons.len());
    for (h, &k) in horizons.iter().enumerate() {
        let ok: Vec<&Trajectory> = results
            .iter()
            .filter_map(|r| r.as_ref().ok().map(|tr| &tr[h]))
            .collect();
        let best = best_fractions(&ok, split.test_len);
        let mut next_ok = 0;
        for (name, res) in names.iter().zip(&results) {
            let row = match res {
                Ok(tr) => {
                    let metrics = summarize(&tr[h], best[next_ok]);
                    next_ok += 1;
                    MetricsRow {
                        method: name.clone(),
                        horizon: k,
                        metrics: Some(metrics),
                        failure: None,
                    }
                }
                Err(e) => MetricsRow {
                    method: name.clone(),
                    horizon: k,
                    metrics: None,
                    failure: Some(e.to_string()),
                },
            };
            rows.push(row);
        }
    }
    Ok(MetricsTable { rows })
}

/// Share of origins at which each method has the strictly smallest absolute
/// error; a `t`-way tie gives each of the tied methods `1/t`.
fn best_fractions(trajectories: &[&Trajectory], n: usize) -> Vec<f64> {
    let mut wins = vec![0.0; trajectories.len()];
    if trajectories.is_empty() || n == 0 {
        return wins;
    }
    let mut tied = Vec::with_capacity(trajectories.len());
    for i in 0..n {
        let best = trajectories
            .iter()
            .map(|t| t.errors[i].abs())
            .fold(f64::INFINITY, f64::min);
        tied.clear();
        tied.extend((0..trajectories.len()).filter(|&m| trajectories[m].errors[i].abs() == best));
        let share = 1.0 / tied.len() as f64;
        for &m in &tied {
            wins[m] += share;
        }
    }
    wins.iter().map(|w| w / n as f64).collect()
}

fn summarize(tr: &Trajectory, best_fraction: f64) -> Metrics {
    let n = tr.errors.len();
    let nf = n as f64;
    let abs: Vec<f64> = tr.errors.iter().map(|e| e.abs()).collect();
    Metrics {
        rmse: (tr.errors.iter().map(|e| e * e).sum::<f64>() / nf).sqrt(),
        mae: median(&abs),
        best_fraction,
        coverage90: tr.covered.iter().filter(|&&c| c).count() as f64 / nf,
        mean_log_score: tr.scores.iter().sum::<f64>() / nf,
        n,
    }
}
