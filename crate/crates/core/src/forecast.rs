//! Closed-form `k`-step predictive mixtures and their summaries.
//!
//! Treating the length-`(p+1)` windows as independent draws around earlier
//! windows makes the `k`-step predictive a Gaussian mixture: having seen the
//! first `p-k+1` entries of the window ending at `n+k`, each earlier window is
//! weighted by its distance on those entries and the unseen last entry is
//! predicted by Gaussian conditioning on the upper-left block of `Σ`.

use crate::error::{LmarError, Result};
use crate::estimation::FittedModel;
use crate::model::GaussianMixture;
use crate::numeric::{logsumexp, mean, std_normal_cdf, std_normal_log_pdf};
use crate::param::{partition_k, MixtureParam};
use crate::series::TimeSeries;
use crate::windows::WindowBank;

/// Lower bound applied to log scores so that degenerate forecasts stay finite.
pub const LOG_SCORE_CAP: f64 = -746.0;

/// Default two-sided interval level.
pub const DEFAULT_LEVEL: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

impl Interval {
    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }
}

/// A predictive distribution for `Y_{n+k}` with its point and interval summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub horizon_k: usize,
    pub mixture: GaussianMixture,
    pub point: f64,
    pub interval: Interval,
    pub log_score: Option<f64>,
}

impl Forecast {
    pub fn new(horizon_k: usize, mixture: GaussianMixture, level: f64) -> Result<Self> {
        let (lo, hi) = prediction_interval(&mixture, level)?;
        Ok(Self {
            horizon_k,
            point: point_forecast(&mixture),
            interval: Interval { lo, hi, level },
            mixture,
            log_score: None,
        })
    }

    /// Records the log score once the realized value is known.
    pub fn score(&mut self, y_true: f64) -> f64 {
        let s = log_score(&self.mixture, y_true);
        self.log_score = Some(s);
        s
    }
}

/// Mixture mean.
pub fn point_forecast(mixture: &GaussianMixture) -> f64 {
    mixture
        .weights()
        .iter()
        .zip(mixture.means())
        .map(|(w, m)| w * m)
        .sum()
}

pub fn mixture_cdf(mixture: &GaussianMixture, y: f64) -> f64 {
    let sd = mixture.std_dev();
    let c: f64 = mixture
        .weights()
        .iter()
        .zip(mixture.means())
        .map(|(w, m)| w * std_normal_cdf((y - m) / sd))
        .sum();
    c.clamp(0.0, 1.0)
}

/// Inverse CDF. The result satisfies `|cdf(y) - q| <= 1e-10` unless the
/// bracket collapses to adjacent floats first.
///
/// Components whose weights sum to less than `1e-16` are ignored, then a
/// Newton iteration safeguarded by bisection runs on the remaining ones.
pub fn mixture_quantile(mixture: &GaussianMixture, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(LmarError::InvalidProbability(q));
    }
    let sd = mixture.std_dev();
    let floor = 1e-16 / mixture.len() as f64;
    let (weights, means): (Vec<f64>, Vec<f64>) = mixture
        .weights()
        .iter()
        .zip(mixture.means())
        .filter(|(w, _)| **w > floor)
        .map(|(w, m)| (*w, *m))
        .unzip();
    let cdf_pdf = |y: f64| -> (f64, f64) {
        let mut c = 0.0;
        let mut d = 0.0;
        for (w, m) in weights.iter().zip(&means) {
            let z = (y - m) / sd;
            c += w * std_normal_cdf(z);
            d += w * std_normal_log_pdf(z).exp();
        }
        (c.clamp(0.0, 1.0), d / sd)
    };
    let min = means.iter().copied().fold(f64::INFINITY, f64::min);
    let max = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut width = 10.0 * sd;
    let (mut lo, mut hi) = (min - width, max + width);
    while cdf_pdf(lo).0 > q {
        width *= 2.0;
        lo = min - width;
    }
    width = 10.0 * sd;
    while cdf_pdf(hi).0 < q {
        width *= 2.0;
        hi = max + width;
    }
    let mut x = weights.iter().zip(&means).map(|(w, m)| w * m).sum::<f64>();
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..2000 {
        let (c, d) = cdf_pdf(x);
        if (c - q).abs() <= 1e-10 {
            return Ok(x);
        }
        if c < q {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - (c - q) / d;
        x = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if x <= lo || x >= hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Equal-tailed interval with the given coverage.
pub fn prediction_interval(mixture: &GaussianMixture, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(LmarError::InvalidProbability(level));
    }
    let lo = mixture_quantile(mixture, 0.5 * (1.0 - level))?;
    let hi = mixture_quantile(mixture, 0.5 * (1.0 + level))?;
    Ok((lo, hi))
}

/// Log predictive density at `y`.
pub fn log_density(mixture: &GaussianMixture, y: f64) -> f64 {
    let sd = mixture.std_dev();
    let terms: Vec<f64> = mixture
        .weights()
        .iter()
        .zip(mixture.means())
        .map(|(w, m)| w.ln() + std_normal_log_pdf((y - m) / sd))
        .collect();
    logsumexp(&terms) - sd.ln()
}

/// Negative log predictive density at the realized value, floored at [`LOG_SCORE_CAP`].
pub fn log_score(mixture: &GaussianMixture, y_true: f64) -> f64 {
    let s = -log_density(mixture, y_true);
    if s.is_nan() {
        return LOG_SCORE_CAP;
    }
    s.max(LOG_SCORE_CAP)
}

/// Per-horizon constants: `g = L_r^{-1} Σ^k_12` and `sigma2_k = Σ22 - |g|^2`.
#[derive(Debug, Clone)]
struct HorizonTerms {
    g: Vec<f64>,
    sigma2: f64,
}

fn horizon_terms(sigma: &MixtureParam, k: usize) -> Result<HorizonTerms> {
    let part = partition_k(sigma, k)?;
    let r = part.block_dim();
    let l = sigma.cholesky();
    let mut g = vec![0.0; r];
    for row in 0..r {
        let mut acc = part.s12[row];
        for c in 0..row {
            acc -= l[(row, c)] * g[c];
        }
        g[row] = acc / l[(row, row)];
    }
    let sigma2 = part.s22 - g.iter().map(|x| x * x).sum::<f64>();
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(LmarError::SingularMatrix(format!(
            "predictive variance {sigma2} at horizon {k} is not positive"
        )));
    }
    Ok(HorizonTerms { g, sigma2 })
}

/// Streaming forecaster for a fixed `Σ`.
///
/// Keeps the whitened windows of everything observed so far; each new
/// observation costs `O(p^2)` and each forecast `O(n p)`. The first observation
/// held plays the role of `Y_{-m}`: every candidate window lies inside the
/// observed history.
#[derive(Debug, Clone)]
pub struct LmarPredictor {
    sigma: MixtureParam,
    values: Vec<f64>,
    bank: WindowBank,
    horizons: Vec<Option<HorizonTerms>>,
}

impl LmarPredictor {
    pub fn new(sigma: MixtureParam, history: &[f64]) -> Result<Self> {
        if history.is_empty() {
            return Err(LmarError::SeriesTooShort("empty history".into()));
        }
        if let Some(pos) = history.iter().position(|v| !v.is_finite()) {
            return Err(LmarError::InvalidSeries(format!(
                "non-finite value at position {pos}"
            )));
        }
        let bank = WindowBank::from_values(sigma.cholesky(), history, mean(history));
        let p = sigma.p();
        let horizons = (1..=p)
            .map(|k| horizon_terms(&sigma, k).ok())
            .collect();
        Ok(Self {
            sigma,
            values: history.to_vec(),
            bank,
            horizons,
        })
    }

    pub fn p(&self) -> usize {
        self.sigma.p()
    }

    pub fn sigma(&self) -> &MixtureParam {
        &self.sigma
    }

    /// Values observed so far.
    pub fn history(&self) -> &[f64] {
        &self.values
    }

    pub fn observe(&mut self, y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(LmarError::InvalidSeries(format!("non-finite observation {y}")));
        }
        self.values.push(y);
        self.bank.extend(&self.values);
        Ok(())
    }

    /// Predictive mixture for the value `k` steps after the last observation.
    pub fn predictive(&self, k: usize) -> Result<GaussianMixture> {
        let p = self.p();
        if k < 1 || k > p {
            return Err(LmarError::HorizonOutOfRange { k, max: p });
        }
        let terms = self.horizons[k - 1]
            .as_ref()
            .ok_or_else(|| LmarError::SingularMatrix(format!("horizon {k} variance")))?;
        let r = p - k + 1;
        let n = self.values.len() - 1;
        // J_{n+k} in storage terms: windows ending at n+k-j must start at >= 0
        if n + k < 2 * p + 1 {
            return Err(LmarError::EmptyLagSet((n + k) as isize));
        }
        let max_lag = n + k - p;

        // whitened observed prefix of the window ending at n+k
        let l = self.sigma.cholesky();
        let center = self.bank.center();
        let start = n + k - p;
        let mut cur = vec![0.0; r];
        for row in 0..r {
            let mut acc = self.values[start + row] - center;
            for c in 0..row {
                acc -= l[(row, c)] * cur[c];
            }
            cur[row] = acc / l[(row, row)];
        }

        let count = max_lag - p;
        let mut log_w = Vec::with_capacity(count);
        let mut means = Vec::with_capacity(count);
        let mut labels = Vec::with_capacity(count);
        for j in (p + 1)..=max_lag {
            let end = n + k - j;
            let motif = &self.bank.window(end)[..r];
            let mut q = 0.0;
            let mut shift = 0.0;
            for c in 0..r {
                let d = cur[c] - motif[c];
                q += d * d;
                shift += terms.g[c] * d;
            }
            log_w.push(-0.5 * q);
            means.push(self.values[end] + shift);
            labels.push(j);
        }
        GaussianMixture::from_log_weights(&log_w, means, terms.sigma2, labels)
    }

    pub fn forecast(&self, k: usize, level: f64) -> Result<Forecast> {
        Forecast::new(k, self.predictive(k)?, level)
    }
}

/// `k`-step predictive mixture for `Y_{n+k}` given the whole of `history`.
pub fn predictive_distribution(
    history: &TimeSeries,
    model: &FittedModel,
    k: usize,
) -> Result<GaussianMixture> {
    let p = model.sigma_hat.p();
    if k < 1 || k > p {
        return Err(LmarError::HorizonOutOfRange { k, max: p });
    }
    LmarPredictor::new(model.sigma_hat.clone(), history.values())?.predictive(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::conditional_mixture;
    use crate::param::derive_params;
    use nalgebra::DMatrix;

    fn two_point() -> GaussianMixture {
        GaussianMixture::new(vec![0.5, 0.5], vec![-1.0, 1.0], 0.25, vec![3, 4]).unwrap()
    }

    #[test]
    fn point_forecast_examples() {
        assert_eq!(point_forecast(&GaussianMixture::single(2.5, 1.0).unwrap()), 2.5);
        assert_eq!(point_forecast(&two_point()), 0.0);
    }

    #[test]
    fn cdf_examples() {
        let g = GaussianMixture::single(1.5, 4.0).unwrap();
        assert_eq!(mixture_cdf(&g, 1.5), 0.5);
        assert!(mixture_cdf(&g, -1e6) < 1e-12);
        assert!(1.0 - mixture_cdf(&g, 1e6) < 1e-12);
    }

    #[test]
    fn quantile_examples() {
        let q = mixture_quantile(&two_point(), 0.5).unwrap();
        assert!(q.abs() < 1e-9);
        let g = GaussianMixture::single(3.0, 4.0).unwrap();
        let q95 = mixture_quantile(&g, 0.95).unwrap();
        assert!((q95 - (3.0 + 1.644_853_626_951_472_2 * 2.0)).abs() < 1e-6);
        for i in 1..100 {
            let q = i as f64 / 100.0;
            let y = mixture_quantile(&two_point(), q).unwrap();
            assert!((mixture_cdf(&two_point(), y) - q).abs() < 1e-8);
        }
        assert!(matches!(
            mixture_quantile(&g, 1.0),
            Err(LmarError::InvalidProbability(_))
        ));
        assert!(mixture_quantile(&g, 0.0).is_err());
    }

    #[test]
    fn interval_examples() {
        let g = GaussianMixture::single(-2.0, 9.0).unwrap();
        let (lo, hi) = prediction_interval(&g, 0.9).unwrap();
        let z = 1.644_853_626_951_472_2;
        assert!((lo - (-2.0 - 3.0 * z)).abs() < 1e-6);
        assert!((hi - (-2.0 + 3.0 * z)).abs() < 1e-6);
        assert!(prediction_interval(&g, 1.5).is_err());
        let (lo, hi) = prediction_interval(&two_point(), 0.01).unwrap();
        assert!(lo < hi);
    }

    #[test]
    fn log_score_examples() {
        let g = GaussianMixture::single(0.7, 2.0).unwrap();
        let expect = 0.5 * (2.0 * std::f64::consts::PI * 2.0).ln();
        assert!((log_score(&g, 0.7) - expect).abs() < 1e-14);
        let padded =
            GaussianMixture::new(vec![1.0, 0.0], vec![0.7, 50.0], 2.0, vec![0, 1]).unwrap();
        assert!((log_score(&padded, 1.3) - log_score(&g, 1.3)).abs() < 1e-12);
        let spike = GaussianMixture::single(0.0, f64::MIN_POSITIVE).unwrap();
        assert!(log_score(&spike, 0.0) >= LOG_SCORE_CAP);
        assert!(log_score(&spike, 1.0).is_finite());
    }

    #[test]
    fn one_step_matches_conditional_mixture() {
        let p = 3;
        let sigma = MixtureParam::new(DMatrix::from_fn(p + 1, p + 1, |r, c| {
            0.9f64.powi((r as i32 - c as i32).abs()) + if r == c { 0.2 } else { 0.0 }
        }))
        .unwrap();
        let values: Vec<f64> = (0..80).map(|t| (t as f64 * 0.37).sin() * 4.0 + (t % 5) as f64 * 0.1).collect();
        let hist = TimeSeries::with_origin(values, 30.0, 20).unwrap();
        let model = FittedModel::from_sigma(sigma.clone(), 20);
        let pred = predictive_distribution(&hist, &model, 1).unwrap();
        let cond = conditional_mixture(&hist, hist.last_index() + 1, &sigma, 20).unwrap();
        assert_eq!(pred.len(), cond.len());
        assert_eq!(pred.lag_labels(), cond.lag_labels());
        for c in 0..pred.len() {
            assert!((pred.weights()[c] - cond.weights()[c]).abs() < 1e-12);
            assert!((pred.means()[c] - cond.means()[c]).abs() < 1e-12 * (1.0 + cond.means()[c].abs()));
        }
        assert!((pred.common_variance() - derive_params(&sigma).unwrap().sigma2).abs() < 1e-12);
    }

    #[test]
    fn constant_history_predicts_constant() {
        let sigma = MixtureParam::identity(4).unwrap();
        let mut pr = LmarPredictor::new(sigma, &[6.0; 30]).unwrap();
        pr.observe(6.0).unwrap();
        for k in 1..=4 {
            let f = pr.forecast(k, 0.9).unwrap();
            assert!((f.point - 6.0).abs() < 1e-12);
            let n = f.mixture.len() as f64;
            assert!(f.mixture.weights().iter().all(|w| (w - 1.0 / n).abs() < 1e-12));
            assert_eq!(f.mixture.common_variance(), 1.0);
        }
        assert!(matches!(
            pr.forecast(5, 0.9),
            Err(LmarError::HorizonOutOfRange { k: 5, max: 4 })
        ));
        assert!(pr.forecast(0, 0.9).is_err());
        let short = LmarPredictor::new(MixtureParam::identity(4).unwrap(), &[1.0; 5]).unwrap();
        assert!(matches!(short.predictive(1), Err(LmarError::EmptyLagSet(_))));
    }

    #[test]
    fn horizon_variance_matches_schur_oracle() {
        let p = 5;
        let a = DMatrix::from_fn(p + 1, p + 1, |r, c| {
            0.8f64.powi((r as i32 - c as i32).abs()) * (1.0 + 0.1 * (r + c) as f64)
        });
        let sigma = MixtureParam::new(a.clone() + DMatrix::identity(p + 1, p + 1) * 0.05).unwrap();
        let a = sigma.sigma().clone();
        for k in 1..=p {
            let r = p - k + 1;
            let keep: Vec<usize> = (0..r).chain(std::iter::once(p)).collect();
            let sub = DMatrix::from_fn(r + 1, r + 1, |i, j| a[(keep[i], keep[j])]);
            let inv = sub.try_inverse().unwrap();
            let oracle = 1.0 / inv[(r, r)];
            let got = horizon_terms(&sigma, k).unwrap().sigma2;
            assert!((got - oracle).abs() < 1e-10 * oracle);
        }
    }
}
