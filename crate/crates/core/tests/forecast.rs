mod common;

use common::*;
use lmar::model::GaussianMixture;
use lmar::{
    conditional_mixture, derive_params, log_score, mixture_cdf, mixture_quantile, point_forecast,
    predictive_distribution, prediction_interval, FittedModel, LmarPredictor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mixture(rng: &mut ChaCha8Rng, len: usize) -> GaussianMixture {
    let raw: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let means = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
    let var = rng.random_range(0.05..2.0);
    GaussianMixture::new(weights, means, var, (1..=len).collect()).unwrap()
}

fn draws(mix: &GaussianMixture, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| mix.sample(&mut rng)).collect()
}

#[test]
fn point_is_the_sample_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mix = random_mixture(&mut rng, 5);
    let xs = draws(&mix, 1_000_000, 2);
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((mean - point_forecast(&mix)).abs() < 3.0 * (var / n).sqrt());
}

#[test]
fn cdf_matches_empirical_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mix = random_mixture(&mut rng, 4);
    let ks = ks_statistic(draws(&mix, 1_000_000, 4), |y| mixture_cdf(&mix, y));
    assert!(ks < 0.002, "sup difference {ks}");
}

#[test]
fn interval_covers_its_level() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mix = random_mixture(&mut rng, 6);
    let (lo, hi) = prediction_interval(&mix, 0.9).unwrap();
    let xs = draws(&mix, 1_000_000, 6);
    let inside = xs.iter().filter(|&&x| lo <= x && x <= hi).count() as f64 / xs.len() as f64;
    assert!((inside - 0.9).abs() < 0.002, "coverage {inside}");
}

#[test]
fn log_score_matches_naive_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let len = rng.random_range(1..8);
        let mix = random_mixture(&mut rng, len);
        let y: f64 = rng.random_range(-6.0..6.0);
        let var = mix.common_variance();
        let dens: f64 = mix
            .weights()
            .iter()
            .zip(mix.means())
            .map(|(w, m)| w * (-(y - m).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt())
            .sum();
        assert!(rel_err(log_score(&mix, y), -dens.ln()) < 1e-10);
    }
}

#[test]
fn zero_weight_component_leaves_score_unchanged() {
    let a = GaussianMixture::new(vec![0.3, 0.7], vec![0.0, 1.0], 0.5, vec![1, 2]).unwrap();
    let b = GaussianMixture::new(vec![0.3, 0.7, 0.0], vec![0.0, 1.0, 40.0], 0.5, vec![1, 2, 3])
        .unwrap();
    for y in [-2.0, 0.4, 3.0] {
        assert!((log_score(&a, y) - log_score(&b, y)).abs() < 1e-12);
    }
}

#[test]
fn quantile_round_trip_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let mix = random_mixture(&mut rng, 7);
        for c in 1..100 {
            let q = c as f64 / 100.0;
            let y = mixture_quantile(&mix, q).unwrap();
            assert!((mixture_cdf(&mix, y) - q).abs() < 1e-8);
        }
    }
}

#[test]
fn one_step_predictive_is_the_next_conditional() {
    let sigma = random_param(4, 11);
    let m = 20;
    let s = anchored(wavy(70, 12), m);
    let model = FittedModel::from_sigma(sigma.clone(), m);
    let pred = predictive_distribution(&s, &model, 1).unwrap();
    let mut extended = s.values().to_vec();
    extended.push(0.123);
    let next = anchored(extended, m);
    let cond = conditional_mixture(&next, s.last_index() + 1, &sigma, m).unwrap();
    assert_eq!(pred.len(), cond.len());
    for c in 0..pred.len() {
        assert!((pred.weights()[c] - cond.weights()[c]).abs() < 1e-12);
        assert!((pred.means()[c] - cond.means()[c]).abs() < 1e-12);
    }
    assert!((pred.common_variance() - derive_params(&sigma).unwrap().sigma2).abs() < 1e-12);
}

#[test]
fn translation_shifts_every_summary() {
    let sigma = random_param(4, 13);
    let base = wavy(90, 14);
    let c = 37.5;
    let shifted: Vec<f64> = base.iter().map(|v| v + c).collect();
    let a = LmarPredictor::new(sigma.clone(), &base).unwrap();
    let b = LmarPredictor::new(sigma, &shifted).unwrap();
    for k in 1..=3 {
        let mut fa = a.forecast(k, 0.9).unwrap();
        let mut fb = b.forecast(k, 0.9).unwrap();
        for i in 0..fa.mixture.len() {
            assert!((fa.mixture.weights()[i] - fb.mixture.weights()[i]).abs() < 1e-9);
            assert!((fa.mixture.means()[i] + c - fb.mixture.means()[i]).abs() < 1e-9);
        }
        assert!((fa.point + c - fb.point).abs() < 1e-9);
        assert!((fa.interval.lo + c - fb.interval.lo).abs() < 1e-9);
        assert!((fa.interval.hi + c - fb.interval.hi).abs() < 1e-9);
        assert!((fa.score(1.0) - fb.score(1.0 + c)).abs() < 1e-9);
    }
}

#[test]
fn streaming_matches_batch_predictive() {
    let sigma = random_param(5, 15);
    let m = 25;
    let values = wavy(80, 16);
    let model = FittedModel::from_sigma(sigma.clone(), m);
    let mut online = LmarPredictor::new(sigma, &values[..40]).unwrap();
    for t in 40..80 {
        online.observe(values[t]).unwrap();
        let batch = predictive_distribution(&anchored(values[..=t].to_vec(), m), &model, 3).unwrap();
        let stream = online.predictive(3).unwrap();
        for c in 0..batch.len() {
            assert!((batch.weights()[c] - stream.weights()[c]).abs() < 1e-12);
            assert!((batch.means()[c] - stream.means()[c]).abs() < 1e-12);
        }
    }
}

#[test]
fn horizon_and_probability_errors() {
    let sigma = random_param(3, 17);
    let p = LmarPredictor::new(sigma, &wavy(30, 1)).unwrap();
    assert!(p.predictive(0).is_err());
    assert!(p.predictive(3).is_err());
    let mix = GaussianMixture::single(0.0, 1.0).unwrap();
    assert!(mixture_quantile(&mix, 0.0).is_err());
    assert!(mixture_quantile(&mix, 1.0).is_err());
    assert!(prediction_interval(&mix, 1.0).is_err());
}
