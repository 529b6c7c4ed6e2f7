//! Shared fixtures and direct, loop-by-loop reference implementations.
//!
//! The references index the series exactly as the model is written
//! (`Y_i` for `i = -m..=n`) and use explicit matrix inverses, so they share no
//! code path with the library beyond `TimeSeries` storage.

#![allow(dead_code)]

use lmar::{MixtureParam, TimeSeries};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Covariance used for simulation studies: strongly correlated lags and
/// `gamma = (-0.8, 1.8)`, i.e. a smooth signal that is nearly linear over
/// three samples, with component variance 0.01.
pub fn smooth_sigma() -> MixtureParam {
    let r = 0.99;
    let gamma = [-0.8, 1.8];
    let s2 = 0.01;
    let s12 = [gamma[0] + r * gamma[1], r * gamma[0] + gamma[1]];
    let s22 = gamma[0] * s12[0] + gamma[1] * s12[1] + s2;
    MixtureParam::from_row_slice(3, &[1.0, r, s12[0], r, 1.0, s12[1], s12[0], s12[1], s22])
        .unwrap()
}

/// Random SPD matrix with eigenvalues bounded away from zero.
pub fn random_spd(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(dim, dim) * 0.2
}

pub fn random_param(dim: usize, seed: u64) -> MixtureParam {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MixtureParam::new(random_spd(dim, &mut rng)).unwrap()
}

/// A noisy quasi-periodic series of `len` values.
pub fn wavy(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|t| {
            let noise: f64 = StandardNormal.sample(&mut rng);
            (t as f64 * 0.7).sin() * 2.0 + 0.3 * noise
        })
        .collect()
}

/// Series with `Y_{-m}` at storage position 0.
pub fn anchored(values: Vec<f64>, m: usize) -> TimeSeries {
    TimeSeries::with_origin(values, 30.0, m).unwrap()
}

/// Simulated LMAR path from a standard normal seed block of length `m`.
pub fn lmar_path(sigma: &MixtureParam, m: usize, n: usize, seed: u64) -> TimeSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 500);
    let hist: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
    lmar::simulate(sigma, m, &TimeSeries::new(hist).unwrap(), n, seed).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// One-sample Kolmogorov–Smirnov statistic against `cdf`.
pub fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn y(s: &TimeSeries, i: isize) -> f64 {
    s.values()[(i + s.origin() as isize) as usize]
}

fn n_of(s: &TimeSeries) -> isize {
    s.len() as isize - s.origin() as isize - 1
}

fn lags(i: isize, p: usize, m: usize) -> Vec<usize> {
    let last = i + m as isize - p as isize;
    ((p + 1) as isize..=last).map(|j| j as usize).collect()
}

fn w_vec(s: &TimeSeries, i: isize, j: usize, p: usize) -> DVector<f64> {
    let j = j as isize;
    DVector::from_fn(p + 1, |r, _| {
        let l = r as isize + 1;
        y(s, i - p as isize - 1 + l) - y(s, i - j - p as isize - 1 + l)
    })
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let mx = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    mx + xs.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

fn blocks(sigma: &DMatrix<f64>, r: usize) -> (DMatrix<f64>, DVector<f64>, f64) {
    let p = sigma.nrows() - 1;
    let s11 = sigma.view((0, 0), (r, r)).clone_owned();
    let s12 = DVector::from_fn(r, |row, _| sigma[(row, p)]);
    (s11, s12, sigma[(p, p)])
}

/// `(weights, means, variance)` of the conditional law of `Y_i`.
pub fn naive_conditional(
    s: &TimeSeries,
    i: isize,
    sigma: &DMatrix<f64>,
    m: usize,
) -> (Vec<f64>, Vec<f64>, f64) {
    let p = sigma.nrows() - 1;
    let (s11, s12, s22) = blocks(sigma, p);
    let inv11 = s11.try_inverse().unwrap();
    let gamma = &inv11 * &s12;
    let var = s22 - s12.dot(&gamma);
    let mut logw = Vec::new();
    let mut means = Vec::new();
    for j in lags(i, p, m) {
        let w = w_vec(s, i, j, p);
        let v = w.rows(0, p).clone_owned();
        logw.push(-0.5 * (v.transpose() * &inv11 * &v)[(0, 0)]);
        means.push(y(s, i - j as isize) + gamma.dot(&v));
    }
    let lse = log_sum_exp(&logw);
    (logw.iter().map(|l| (l - lse).exp()).collect(), means, var)
}

pub fn naive_exact_loglik(s: &TimeSeries, sigma: &DMatrix<f64>, m: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..=n_of(s) {
        let (w, mu, var) = naive_conditional(s, i, sigma, m);
        let yi = y(s, i);
        let dens: f64 = w
            .iter()
            .zip(&mu)
            .map(|(w, mu)| w * (-(yi - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt())
            .sum();
        total += dens.ln();
    }
    total
}

fn joint_log_terms(s: &TimeSeries, i: isize, inv: &DMatrix<f64>, p: usize, m: usize) -> Vec<f64> {
    lags(i, p, m)
        .into_iter()
        .map(|j| {
            let w = w_vec(s, i, j, p);
            -0.5 * (w.transpose() * inv * &w)[(0, 0)]
        })
        .collect()
}

pub fn naive_approx_loglik(s: &TimeSeries, sigma: &DMatrix<f64>, m: usize) -> f64 {
    let p = sigma.nrows() - 1;
    let inv = sigma.clone().try_inverse().unwrap();
    let log_det = sigma.determinant().ln();
    let mut total = 0.0;
    for i in 0..=n_of(s) {
        let terms = joint_log_terms(s, i, &inv, p, m);
        total += log_sum_exp(&terms)
            - 0.5 * log_det
            - 0.5 * (p as f64 + 1.0) * LN_2PI
            - (terms.len() as f64).ln();
    }
    total
}

pub fn naive_e_step(s: &TimeSeries, sigma: &DMatrix<f64>, m: usize) -> Vec<Vec<f64>> {
    let p = sigma.nrows() - 1;
    let inv = sigma.clone().try_inverse().unwrap();
    (0..=n_of(s))
        .map(|i| {
            let terms = joint_log_terms(s, i, &inv, p, m);
            let mx = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = terms.iter().map(|t| (t - mx).exp()).collect();
            let z: f64 = e.iter().sum();
            e.iter().map(|x| x / z).collect()
        })
        .collect()
}

pub fn naive_m_step(s: &TimeSeries, omega: &[Vec<f64>], p: usize, m: usize) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(p + 1, p + 1);
    for (idx, row) in omega.iter().enumerate() {
        let i = idx as isize;
        for (j, w) in lags(i, p, m).into_iter().zip(row) {
            let wv = w_vec(s, i, j, p);
            for a in 0..=p {
                for b in 0..=p {
                    acc[(a, b)] += w * wv[a] * wv[b];
                }
            }
        }
    }
    acc / omega.len() as f64
}

/// `k`-step predictive `(weights, means, variance)` for `Y_{n+k}` built
/// directly from the partitioned covariance.
pub fn naive_predictive(
    s: &TimeSeries,
    sigma: &DMatrix<f64>,
    m: usize,
    k: usize,
) -> (Vec<f64>, Vec<f64>, f64) {
    let p = sigma.nrows() - 1;
    let r = p - k + 1;
    let (s11, s12, s22) = blocks(sigma, r);
    let inv11 = s11.try_inverse().unwrap();
    let g = &inv11 * &s12;
    let var = s22 - s12.dot(&g);
    let n = n_of(s);
    let target = n + k as isize;
    let mut logw = Vec::new();
    let mut means = Vec::new();
    for j in lags(target, p, m) {
        let ji = j as isize;
        let wt = DVector::from_fn(r, |c, _| {
            let t = target - p as isize + c as isize;
            y(s, t) - y(s, t - ji)
        });
        logw.push(-0.5 * (wt.transpose() * &inv11 * &wt)[(0, 0)]);
        means.push(y(s, target - ji) + g.dot(&wt));
    }
    let lse = log_sum_exp(&logw);
    (logw.iter().map(|l| (l - lse).exp()).collect(), means, var)
}
