//! The location-mixture autoregressive process.
//!
//! Given `Y_{-m..i-1}`, `Y_i` is a Gaussian mixture with one component per
//! candidate lag `j`. Component `j` is centred on `Y_{i-j} + gamma . V_ij` and
//! weighted by how closely the history before `Y_{i-j}` resembles the most
//! recent history, measured in the `Σ11^{-1}` norm. All components share the
//! variance `sigma2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{LmarError, Result};
use crate::lags::{candidate_lags, lag_diff_v};
use crate::numeric::{logsumexp, mean, LN_2PI};
use crate::param::{derive_params, MixtureParam};
use crate::series::TimeSeries;
use crate::windows::WindowBank;

/// Mixture of Gaussians sharing one variance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<f64>,
    common_variance: f64,
    lag_labels: Vec<usize>,
}

impl GaussianMixture {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<f64>,
        common_variance: f64,
        lag_labels: Vec<usize>,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != lag_labels.len()
        {
            return Err(LmarError::ShapeMismatch(format!(
                "weights/means/labels lengths {}/{}/{}",
                weights.len(),
                means.len(),
                lag_labels.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(LmarError::InvalidParameter(
                "mixture weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(LmarError::InvalidParameter(format!(
                "mixture weights sum to {total}"
            )));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(LmarError::InvalidParameter("non-finite mixture mean".into()));
        }
        if !(common_variance.is_finite() && common_variance > 0.0) {
            return Err(LmarError::InvalidParameter(format!(
                "mixture variance must be positive, got {common_variance}"
            )));
        }
        Ok(Self {
            weights,
            means,
            common_variance,
            lag_labels,
        })
    }

    /// Builds a mixture from unnormalized log-weights.
    pub fn from_log_weights(
        log_weights: &[f64],
        means: Vec<f64>,
        common_variance: f64,
        lag_labels: Vec<usize>,
    ) -> Result<Self> {
        let lse = logsumexp(log_weights);
        if !lse.is_finite() {
            return Err(LmarError::InvalidParameter(
                "log-weights have no finite maximum".into(),
            ));
        }
        let mut weights: Vec<f64> = log_weights.iter().map(|lw| (lw - lse).exp()).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self::new(weights, means, common_variance, lag_labels)
    }

    /// A single Gaussian `N(mean, variance)`.
    pub fn single(mean: f64, variance: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], variance, vec![0])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn common_variance(&self) -> f64 {
        self.common_variance
    }

    pub fn std_dev(&self) -> f64 {
        self.common_variance.sqrt()
    }

    pub fn lag_labels(&self) -> &[usize] {
        &self.lag_labels
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Draws one value.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.weights.len() - 1;
        for (c, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = c;
                break;
            }
        }
        let z: f64 = rng.sample(StandardNormal);
        self.means[pick] + self.std_dev() * z
    }
}

/// Target positions and lag ranges of a series anchored at `origin >= m`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub p: usize,
    pub m: usize,
    pub origin: usize,
    pub len: usize,
}

impl Layout {
    pub fn new(series: &TimeSeries, p: usize, m: usize) -> Result<Self> {
        if p == 0 {
            return Err(LmarError::InvalidParameter("p must be at least 1".into()));
        }
        if series.origin() < m {
            return Err(LmarError::IndexOutOfRange {
                index: -(m as isize),
                lo: series.first_index(),
                hi: series.last_index(),
            });
        }
        if m < 2 * p + 1 {
            return Err(LmarError::EmptyLagSet(0));
        }
        Ok(Self {
            p,
            m,
            origin: series.origin(),
            len: series.len(),
        })
    }

    /// Storage positions of the targets `Y_0..Y_n`.
    pub fn targets(&self) -> std::ops::Range<usize> {
        self.origin..self.len
    }

    pub fn n_targets(&self) -> usize {
        self.len - self.origin
    }

    /// Largest lag for the target at storage position `pos`.
    pub fn max_lag(&self, pos: usize) -> usize {
        pos + self.m - self.origin - self.p
    }
}

fn center_of(series: &TimeSeries) -> f64 {
    mean(series.values())
}

/// Conditional law of `Y_i` given `Y_{-m..i-1}`.
pub fn conditional_mixture(
    series: &TimeSeries,
    i: isize,
    sigma: &MixtureParam,
    m: usize,
) -> Result<GaussianMixture> {
    let p = sigma.p();
    let lags = candidate_lags(i, p, m);
    if lags.is_empty() {
        return Err(LmarError::EmptyLagSet(i));
    }
    if series.first_index() > -(m as isize) {
        return Err(LmarError::IndexOutOfRange {
            index: -(m as isize),
            lo: series.first_index(),
            hi: series.last_index(),
        });
    }
    let derived = derive_params(sigma)?;
    let l11 = sigma.cholesky().view((0, 0), (p, p)).clone_owned();
    let mut log_w = Vec::with_capacity(lags.len());
    let mut means = Vec::with_capacity(lags.len());
    let mut z = vec![0.0; p];
    for j in lags.iter() {
        let v = lag_diff_v(series, i, j, p)?;
        // L11 z = V
        for r in 0..p {
            let mut acc = v[r];
            for c in 0..r {
                acc -= l11[(r, c)] * z[c];
            }
            z[r] = acc / l11[(r, r)];
        }
        let q: f64 = z.iter().map(|x| x * x).sum();
        log_w.push(-0.5 * q);
        let ar: f64 = derived.gamma.iter().zip(&v).map(|(g, d)| g * d).sum();
        means.push(series.get(i - j as isize)? + ar);
    }
    GaussianMixture::from_log_weights(&log_w, means, derived.sigma2, lags.iter().collect())
}

/// Exact conditional log-density of `Y_{0..n}` given `Y_{-m..-1}`.
///
/// Includes the `-log(2 pi)/2` constant of each term.
pub fn exact_cond_loglik(series: &TimeSeries, sigma: &MixtureParam, m: usize) -> Result<f64> {
    let layout = Layout::new(series, sigma.p(), m)?;
    let bank = WindowBank::from_values(sigma.cholesky(), series.values(), center_of(series));
    let p = layout.p;
    let log_sd = sigma.cholesky()[(p, p)].ln();
    let terms: Vec<f64> = layout
        .targets()
        .into_par_iter()
        .map(|pos| {
            let max_lag = layout.max_lag(pos);
            let mut prior = Vec::with_capacity(max_lag - p);
            let mut joint = Vec::with_capacity(max_lag - p);
            for j in (p + 1)..=max_lag {
                let (q_v, r) = bank.split_distance(pos, pos - j);
                prior.push(-0.5 * q_v);
                joint.push(-0.5 * (q_v + r * r));
            }
            logsumexp(&joint) - logsumexp(&prior) - log_sd - 0.5 * LN_2PI
        })
        .collect();
    Ok(terms.iter().sum())
}

/// Observed-data log-likelihood of the independent window-mixture
/// approximation with uniform lag probabilities:
/// `sum_i [ logsumexp_j(-W_ij' Σ^{-1} W_ij / 2) - log|Σ|/2 - (p+1) log(2 pi)/2 - log|J_i| ]`.
///
/// This is the EM convergence monitor.
pub fn approx_obs_loglik(series: &TimeSeries, sigma: &MixtureParam, m: usize) -> Result<f64> {
    let layout = Layout::new(series, sigma.p(), m)?;
    let bank = WindowBank::from_values(sigma.cholesky(), series.values(), center_of(series));
    Ok(monitor_terms(&layout, &bank, sigma.log_det(), None))
}

/// Sums the monitor over all targets; when `rows` is given, also stores the
/// normalized responsibilities of each target.
pub(crate) fn monitor_terms(
    layout: &Layout,
    bank: &WindowBank,
    log_det: f64,
    rows: Option<&mut Vec<Vec<f64>>>,
) -> f64 {
    let p = layout.p;
    let constant = -0.5 * log_det - 0.5 * (p as f64 + 1.0) * LN_2PI;
    let results: Vec<(f64, Vec<f64>)> = layout
        .targets()
        .into_par_iter()
        .map(|pos| {
            let max_lag = layout.max_lag(pos);
            let mut log_w: Vec<f64> = ((p + 1)..=max_lag)
                .map(|j| {
                    let (q_v, r) = bank.split_distance(pos, pos - j);
                    -0.5 * (q_v + r * r)
                })
                .collect();
            let lse = logsumexp(&log_w);
            let term = lse + constant - (log_w.len() as f64).ln();
            for w in log_w.iter_mut() {
                *w = (*w - lse).exp();
            }
            (term, log_w)
        })
        .collect();
    let total = results.iter().map(|(t, _)| t).sum();
    if let Some(rows) = rows {
        *rows = results.into_iter().map(|(_, r)| r).collect();
    }
    total
}

/// Simulates `n_steps` new observations after `seed_history`.
///
/// The last `m` values of `seed_history` become `Y_{-m..-1}`; each `Y_i` is
/// drawn by first picking a lag `M_i = j` with probability proportional to
/// `exp(-V_ij' Σ11^{-1} V_ij / 2)` and then `Y_i ~ N(Y_{i-j} + gamma . V_ij, sigma2)`.
/// The returned series has origin `m`.
pub fn simulate(
    sigma: &MixtureParam,
    m: usize,
    seed_history: &TimeSeries,
    n_steps: usize,
    rng_seed: u64,
) -> Result<TimeSeries> {
    let p = sigma.p();
    let need = (2 * p + 1).max(m);
    if m < 2 * p + 1 || seed_history.len() < need {
        return Err(LmarError::SeedTooShort {
            need,
            got: seed_history.len().min(m),
        });
    }
    let seed = &seed_history.values()[seed_history.len() - m..];
    let mut values = Vec::with_capacity(m + n_steps);
    values.extend_from_slice(seed);
    let l11 = sigma.cholesky().view((0, 0), (p, p)).clone_owned();
    let l21: Vec<f64> = (0..p).map(|c| sigma.cholesky()[(p, c)]).collect();
    let sd = sigma.cholesky()[(p, p)];
    let mut bank = WindowBank::new(&l11, mean(seed));
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut log_w = Vec::new();
    let mut weights = Vec::new();
    for _ in 0..n_steps {
        let pos = values.len();
        bank.extend(&values);
        let max_lag = pos - p;
        log_w.clear();
        log_w.extend(
            ((p + 1)..=max_lag).map(|j| -0.5 * bank.prefix_distance(pos - 1, pos - j - 1, p)),
        );
        let lse = logsumexp(&log_w);
        weights.clear();
        weights.extend(log_w.iter().map(|lw| (lw - lse).exp()));
        let u: f64 = rng.random::<f64>() * weights.iter().sum::<f64>();
        let mut acc = 0.0;
        let mut pick = weights.len() - 1;
        for (c, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = c;
                break;
            }
        }
        let j = p + 1 + pick;
        let mu = values[pos - j] + bank.prefix_dot(pos - 1, pos - j - 1, &l21);
        let z: f64 = rng.sample(StandardNormal);
        values.push(mu + sd * z);
    }
    TimeSeries::with_origin(values, seed_history.sample_rate_hz(), m)
}
