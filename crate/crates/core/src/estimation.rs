//! Approximate EM estimation of `Σ`.
//!
//! Each iteration computes lag responsibilities from the window differences
//! `W_ij` under the current `Σ` and replaces `Σ` by their weighted
//! second-moment matrix. The update maximizes an approximation to the
//! complete-data likelihood, so the monitored objective can dip; the fit keeps
//! the best iterate seen.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{LmarError, Result};
use crate::lags::{candidate_lags, LagSet};
use crate::model::{exact_cond_loglik, monitor_terms, Layout};
use crate::numeric::{mean, sample_variance};
use crate::param::MixtureParam;
use crate::series::TimeSeries;
use crate::windows::WindowBank;

/// Default motif order.
pub const DEFAULT_P: usize = 22;
/// Default number of conditioning observations.
pub const DEFAULT_M: usize = 400;
/// Floor for the diagonal starting value.
pub const INIT_VARIANCE_FLOOR: f64 = 1e-8;

/// Posterior lag probabilities `omega_ij`, one row per target `i = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    pub p: usize,
    pub m: usize,
    rows: Vec<Vec<f64>>,
}

impl Responsibilities {
    pub fn from_rows(p: usize, m: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            let lags = candidate_lags(i as isize, p, m);
            if row.len() != lags.len() {
                return Err(LmarError::ShapeMismatch(format!(
                    "row {i} has {} entries, |J_{i}| = {}",
                    row.len(),
                    lags.len()
                )));
            }
            let total: f64 = row.iter().sum();
            if row.iter().any(|w| !(0.0..=1.0).contains(w)) || (total - 1.0).abs() > 1e-12 {
                return Err(LmarError::InvalidParameter(format!(
                    "row {i} is not a probability vector"
                )));
            }
        }
        Ok(Self { p, m, rows })
    }

    pub fn n_targets(&self) -> usize {
        self.rows.len()
    }

    /// `omega_{i, .}` in increasing lag order.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn lags(&self, i: usize) -> LagSet {
        candidate_lags(i as isize, self.p, self.m)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Diagonal matrix with the sample variance of first differences.
    Diagonal,
    /// A caller-supplied starting value.
    Given(MixtureParam),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub init: Init,
    /// Keep every iterate in [`FittedModel::path`].
    pub keep_path: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-4,
            max_iter: 100,
            init: Init::Diagonal,
            keep_path: false,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(LmarError::InvalidParameter(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if self.max_iter == 0 {
            return Err(LmarError::InvalidParameter("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Result of [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub sigma_hat: MixtureParam,
    pub p: usize,
    pub m: usize,
    pub iterations: usize,
    /// Monitor value at the starting point and after every iteration.
    pub monitor_trace: Vec<f64>,
    /// Exact conditional log-likelihood at `sigma_hat`.
    pub exact_loglik_final: f64,
    pub converged: bool,
    /// The returned iterate is not the last one computed.
    pub best_iterate_used: bool,
    /// Some iterate needed diagonal jitter to be positive definite.
    pub jitter_applied: bool,
    /// Every iterate, starting value first; empty unless requested.
    pub path: Vec<MixtureParam>,
}

impl FittedModel {
    /// Wraps a known `Σ` (e.g. the true parameter of a simulation) as a model.
    pub fn from_sigma(sigma: MixtureParam, m: usize) -> Self {
        Self {
            p: sigma.p(),
            sigma_hat: sigma,
            m,
            iterations: 0,
            monitor_trace: Vec::new(),
            exact_loglik_final: f64::NAN,
            converged: true,
            best_iterate_used: false,
            jitter_applied: false,
            path: Vec::new(),
        }
    }
}

fn whiten(series: &TimeSeries, sigma: &MixtureParam) -> WindowBank {
    WindowBank::from_values(sigma.cholesky(), series.values(), mean(series.values()))
}

/// `omega_ij` proportional to `exp(-W_ij' Σ^{-1} W_ij / 2)`, normalized over `J_i`.
pub fn e_step(series: &TimeSeries, sigma: &MixtureParam, m: usize) -> Result<Responsibilities> {
    let layout = Layout::new(series, sigma.p(), m)?;
    let bank = whiten(series, sigma);
    let mut rows = Vec::new();
    monitor_terms(&layout, &bank, sigma.log_det(), Some(&mut rows));
    Ok(Responsibilities {
        p: sigma.p(),
        m,
        rows,
    })
}

/// `Σ+ = (n+1)^{-1} sum_i sum_j omega_ij W_ij W_ij'`, symmetrized.
///
/// Expands `W_ij = Z_i - Z_{i-j}` so that the cost is linear in the number of
/// (target, lag) pairs: with `b_i = sum_j omega_ij Z_{i-j}` and `c_t` the total
/// responsibility landing on window `t`,
/// `sum = sum_i (Z_i Z_i' - Z_i b_i' - b_i Z_i') + sum_t c_t Z_t Z_t'`.
/// Windows are centred on the series mean first.
pub fn m_step(
    series: &TimeSeries,
    omega: &Responsibilities,
    p: usize,
    m: usize,
) -> Result<DMatrix<f64>> {
    let layout = Layout::new(series, p, m)?;
    if omega.p != p || omega.m != m || omega.n_targets() != layout.n_targets() {
        return Err(LmarError::ShapeMismatch(format!(
            "responsibilities for p={}, m={}, {} targets do not match p={p}, m={m}, {} targets",
            omega.p,
            omega.m,
            omega.n_targets(),
            layout.n_targets()
        )));
    }
    let dim = p + 1;
    let center = mean(series.values());
    let y: Vec<f64> = series.values().iter().map(|v| v - center).collect();
    let window = |end: usize| &y[end - p..=end];

    // b_i per target
    let bs: Vec<Vec<f64>> = layout
        .targets()
        .into_par_iter()
        .map(|pos| {
            let row = &omega.rows[pos - layout.origin];
            let mut b = vec![0.0; dim];
            for (idx, w) in row.iter().enumerate() {
                if *w == 0.0 {
                    continue;
                }
                let z = window(pos - (p + 1 + idx));
                for l in 0..dim {
                    b[l] += w * z[l];
                }
            }
            b
        })
        .collect();

    // c_t per window end position
    let mut c = vec![0.0; y.len()];
    for pos in layout.targets() {
        for (idx, w) in omega.rows[pos - layout.origin].iter().enumerate() {
            c[pos - (p + 1 + idx)] += w;
        }
    }

    let mut acc = DMatrix::<f64>::zeros(dim, dim);
    for (pos, b) in layout.targets().zip(&bs) {
        let z = window(pos);
        for r in 0..dim {
            for col in 0..=r {
                acc[(r, col)] += z[r] * z[col] - z[r] * b[col] - b[r] * z[col];
            }
        }
    }
    for (end, &ct) in c.iter().enumerate() {
        if ct == 0.0 {
            continue;
        }
        let z = window(end);
        for r in 0..dim {
            for col in 0..=r {
                acc[(r, col)] += ct * z[r] * z[col];
            }
        }
    }
    let scale = 1.0 / layout.n_targets() as f64;
    let mut out = DMatrix::zeros(dim, dim);
    for r in 0..dim {
        for col in 0..=r {
            let v = acc[(r, col)] * scale;
            out[(r, col)] = v;
            out[(col, r)] = v;
        }
    }
    Ok(out)
}

/// Diagonal starting value: every diagonal entry is the sample variance of
/// the first differences of the series, floored at [`INIT_VARIANCE_FLOOR`].
pub fn init_sigma(series: &TimeSeries, p: usize) -> Result<MixtureParam> {
    if p == 0 {
        return Err(LmarError::InvalidParameter("p must be at least 1".into()));
    }
    if series.len() < p + 2 {
        return Err(LmarError::SeriesTooShort(format!(
            "need at least {} observations for p = {p}, got {}",
            p + 2,
            series.len()
        )));
    }
    let diffs: Vec<f64> = series.values().windows(2).map(|w| w[1] - w[0]).collect();
    let v = sample_variance(&diffs).max(INIT_VARIANCE_FLOOR);
    MixtureParam::new(DMatrix::from_diagonal(&DVector::from_element(p + 1, v)))
}

/// Fits `Σ` by approximate EM.
///
/// `series` must be anchored with `origin >= m` (see [`TimeSeries::anchored`]);
/// the targets are `Y_0..Y_n`. Iteration stops once the relative change of the
/// monitor ([`crate::model::approx_obs_loglik`]) drops below `rel_tol`, or after
/// `max_iter` updates. The iterate with the highest monitor value is returned.
pub fn fit(series: &TimeSeries, p: usize, m: usize, config: &FitConfig) -> Result<FittedModel> {
    config.validate()?;
    if series.origin() < m {
        return Err(LmarError::SeriesTooShort(format!(
            "series has {} conditioning observations, m = {m} required (anchor the series at m)",
            series.origin()
        )));
    }
    let layout = Layout::new(series, p, m)?;
    let mut sigma = match &config.init {
        Init::Diagonal => init_sigma(series, p)?,
        Init::Given(s) => {
            if s.p() != p {
                return Err(LmarError::ShapeMismatch(format!(
                    "initial sigma has p = {}, expected {p}",
                    s.p()
                )));
            }
            s.clone()
        }
    };
    let mut jitter_applied = sigma.jitter() > 0.0;
    let mut path = Vec::new();

    let evaluate = |sigma: &MixtureParam| -> (f64, Vec<Vec<f64>>) {
        let bank = whiten(series, sigma);
        let mut rows = Vec::new();
        let monitor = monitor_terms(&layout, &bank, sigma.log_det(), Some(&mut rows));
        (monitor, rows)
    };

    let (monitor, mut rows) = evaluate(&sigma);
    let mut trace = vec![monitor];
    let mut best = (monitor, sigma.clone(), 0usize);
    if config.keep_path {
        path.push(sigma.clone());
    }
    let mut converged = false;
    let mut iterations = 0;
    for t in 1..=config.max_iter {
        let omega = Responsibilities { p, m, rows };
        sigma = MixtureParam::new(m_step(series, &omega, p, m)?)?;
        jitter_applied |= sigma.jitter() > 0.0;
        let (monitor, next_rows) = evaluate(&sigma);
        rows = next_rows;
        if !monitor.is_finite() {
            return Err(LmarError::SingularMatrix(format!(
                "monitor became non-finite at iteration {t}"
            )));
        }
        let prev = trace[trace.len() - 1];
        trace.push(monitor);
        if config.keep_path {
            path.push(sigma.clone());
        }
        if monitor > best.0 {
            best = (monitor, sigma.clone(), t);
        }
        iterations = t;
        let scale = if monitor != 0.0 { monitor.abs() } else { 1.0 };
        if (monitor - prev).abs() / scale < config.rel_tol {
            converged = true;
            break;
        }
    }
    let (_, sigma_hat, best_at) = best;
    let exact = exact_cond_loglik(series, &sigma_hat, m)?;
    Ok(FittedModel {
        sigma_hat,
        p,
        m,
        iterations,
        monitor_trace: trace,
        exact_loglik_final: exact,
        converged,
        best_iterate_used: best_at != iterations,
        jitter_applied,
        path,
    })
}
