//! Location-mixture autoregressive (LMAR) models for online, multi-step
//! probabilistic forecasting of quasi-periodic time series.
//!
//! The conditional law of each observation is a Gaussian mixture whose
//! components are earlier values of the series, weighted by how closely the
//! history preceding them matches the most recent history. A single
//! covariance matrix `Σ` parameterizes both the similarity metric and the
//! autoregressive correction; it is fitted by approximate EM
//! ([`estimation::fit`]) and yields closed-form `k`-step predictive mixtures
//! ([`forecast`]).
//!
//! The [`pipeline`] module holds the evaluation protocol: PCA preprocessing,
//! a ridge autoregression baseline, synthetic traces, rolling metrics and
//! grid search. [`cli`] implements the `lmar` command-line tool.

pub mod cli;
pub mod error;
pub mod estimation;
pub mod forecast;
pub mod lags;
pub mod model;
pub mod numeric;
pub mod param;
pub mod pipeline;
pub mod series;
mod windows;

pub use error::{LmarError, Result};
pub use estimation::{e_step, fit, init_sigma, m_step, FitConfig, FittedModel, Init, Responsibilities};
pub use forecast::{
    log_score, mixture_cdf, mixture_quantile, point_forecast, predictive_distribution,
    prediction_interval, Forecast, Interval, LmarPredictor,
};
pub use lags::{candidate_lags, lag_diff_v, lag_diff_w, LagSet};
pub use model::{approx_obs_loglik, conditional_mixture, exact_cond_loglik, simulate, GaussianMixture};
pub use param::{derive_params, partition_k, DerivedParams, KPartition, MixtureParam};
pub use series::TimeSeries;
