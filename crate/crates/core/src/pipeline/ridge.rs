//! Ridge autoregression: `Y_{i+k} ~ beta0 + beta . (Y_{i-p+1}, ..., Y_i)`.
//!
//! Rows are not standardized and by default the intercept is penalized along
//! with the slopes.

use nalgebra::{DMatrix, DVector};

use crate::error::{LmarError, Result};
use crate::forecast::Forecast;
use crate::model::GaussianMixture;

/// Floor on the residual variance so that the predictive stays proper.
pub const RESID_VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeOptions {
    pub penalize_intercept: bool,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        Self {
            penalize_intercept: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub p: usize,
    pub k: usize,
    pub lambda: f64,
    pub beta0: f64,
    pub beta: Vec<f64>,
    /// Mean squared training residual.
    pub resid_variance: f64,
    pub penalize_intercept: bool,
}

/// Design rows `(1, Y_{t-p+1}, ..., Y_t)` and targets `Y_{t+k}`.
pub fn design(train: &[f64], p: usize, k: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if p == 0 || k == 0 {
        return Err(LmarError::InvalidParameter("p and k must be at least 1".into()));
    }
    if train.len() < p + k + 1 {
        return Err(LmarError::SeriesTooShort(format!(
            "ridge with p = {p}, k = {k} needs {} observations, got {}",
            p + k + 1,
            train.len()
        )));
    }
    let rows = train.len() - p - k + 1;
    let x = DMatrix::from_fn(rows, p + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            train[r + c - 1]
        }
    });
    let y = DVector::from_fn(rows, |r, _| train[r + p - 1 + k]);
    Ok((x, y))
}

pub fn ridge_fit(train: &[f64], p: usize, k: usize, lambda: f64) -> Result<RidgeModel> {
    ridge_fit_with(train, p, k, lambda, RidgeOptions::default())
}

pub fn ridge_fit_with(
    train: &[f64],
    p: usize,
    k: usize,
    lambda: f64,
    options: RidgeOptions,
) -> Result<RidgeModel> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(LmarError::InvalidParameter(format!(
            "lambda must be finite and nonnegative, got {lambda}"
        )));
    }
    let (x, y) = design(train, p, k)?;
    let mut gram = x.transpose() * &x;
    let start = if options.penalize_intercept { 0 } else { 1 };
    for d in start..=p {
        gram[(d, d)] += lambda;
    }
    let rhs = x.transpose() * &y;
    let coef = match gram.cholesky() {
        Some(ch) => ch.solve(&rhs),
        None if lambda == 0.0 => {
            return Err(LmarError::SingularMatrix(
                "collinear ridge design at lambda = 0; use lambda > 0".into(),
            ))
        }
        None => return Err(LmarError::SingularMatrix("ridge normal equations".into())),
    };
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(LmarError::SingularMatrix("non-finite ridge coefficients".into()));
    }
    let resid = &y - &x * &coef;
    let mse = resid.norm_squared() / resid.len() as f64;
    Ok(RidgeModel {
        p,
        k,
        lambda,
        beta0: coef[0],
        beta: coef.iter().skip(1).copied().collect(),
        resid_variance: mse.max(RESID_VARIANCE_FLOOR),
        penalize_intercept: options.penalize_intercept,
    })
}

impl RidgeModel {
    /// `beta0 + beta . X_n` where `X_n` is the last `p` values of `history`.
    pub fn point(&self, history: &[f64]) -> Result<f64> {
        if history.len() < self.p {
            return Err(LmarError::SeriesTooShort(format!(
                "ridge prediction needs {} values, got {}",
                self.p,
                history.len()
            )));
        }
        let x = &history[history.len() - self.p..];
        Ok(self.beta0 + self.beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
    }

    /// Gradient of the penalized least-squares objective at the stored coefficients.
    pub fn objective_gradient(&self, train: &[f64]) -> Result<Vec<f64>> {
        let (x, y) = design(train, self.p, self.k)?;
        let mut coef = DVector::zeros(self.p + 1);
        coef[0] = self.beta0;
        for (d, b) in self.beta.iter().enumerate() {
            coef[d + 1] = *b;
        }
        let resid = &x * &coef - y;
        let mut grad = (x.transpose() * resid) * 2.0;
        let start = if self.penalize_intercept { 0 } else { 1 };
        for d in start..=self.p {
            grad[d] += 2.0 * self.lambda * coef[d];
        }
        Ok(grad.iter().copied().collect())
    }
}

/// Gaussian predictive centred on the ridge point with the training residual variance.
pub fn ridge_predict(model: &RidgeModel, history: &[f64], level: f64) -> Result<Forecast> {
    let point = model.point(history)?;
    Forecast::new(
        model.k,
        GaussianMixture::single(point, model.resid_variance)?,
        level,
    )
}
