mod common;

use common::*;
use lmar::forecast::log_density;
use lmar::{
    conditional_mixture, exact_cond_loglik, mixture_cdf, point_forecast, simulate, MixtureParam,
    TimeSeries,
};

#[test]
fn first_simulated_point_follows_the_conditional_mixture() {
    let sigma = random_param(3, 7);
    let m = 12;
    let seed = TimeSeries::new(wavy(m, 3)).unwrap();
    let draws: Vec<f64> = (0..100_000u64)
        .map(|r| simulate(&sigma, m, &seed, 1, r).unwrap().get(0).unwrap())
        .collect();
    let path = simulate(&sigma, m, &seed, 1, 0).unwrap();
    let mix = conditional_mixture(&path, 0, &sigma, m).unwrap();
    let ks = ks_statistic(draws.clone(), |y| mixture_cdf(&mix, y));
    assert!(ks < 0.01, "KS = {ks}");

    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!((mean - point_forecast(&mix)).abs() < 3.0 * se);
}

#[test]
fn exact_loglik_sums_conditional_log_densities() {
    let sigma = smooth_sigma();
    let m = 30;
    let s = lmar_path(&sigma, m, 80, 1);
    let by_hand: f64 = (0..=s.last_index())
        .map(|i| log_density(&conditional_mixture(&s, i, &sigma, m).unwrap(), s.get(i).unwrap()))
        .sum();
    let total = exact_cond_loglik(&s, &sigma, m).unwrap();
    assert!(rel_err(total, by_hand) < 1e-10);
}

#[test]
fn single_target_loglik_is_log_density() {
    let sigma = random_param(3, 4);
    let m = 5;
    let s = anchored(wavy(6, 2), m);
    let mix = conditional_mixture(&s, 0, &sigma, m).unwrap();
    let want = log_density(&mix, s.get(0).unwrap());
    assert!((exact_cond_loglik(&s, &sigma, m).unwrap() - want).abs() < 1e-12);
}

#[test]
fn simulate_uses_the_last_m_seed_values() {
    let sigma = smooth_sigma();
    let long = TimeSeries::new(wavy(100, 5)).unwrap();
    let tail = TimeSeries::new(long.values()[60..].to_vec()).unwrap();
    let a = simulate(&sigma, 40, &long, 30, 9).unwrap();
    let b = simulate(&sigma, 40, &tail, 30, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.origin(), 40);
    assert_eq!(a.len(), 70);
    assert_eq!(&a.values()[..40], &long.values()[60..]);
}

#[test]
fn simulate_rejects_short_seed() {
    let sigma = MixtureParam::identity(2).unwrap();
    let seed = TimeSeries::new(vec![0.0; 4]).unwrap();
    assert!(simulate(&sigma, 10, &seed, 5, 0).is_err());
    let seed = TimeSeries::new(vec![0.0; 10]).unwrap();
    assert!(simulate(&sigma, 4, &seed, 5, 0).is_err());
}

#[test]
fn different_rng_seeds_give_different_paths() {
    let sigma = smooth_sigma();
    let a = lmar_path(&sigma, 20, 50, 1);
    let b = simulate(
        &sigma,
        20,
        &TimeSeries::new(a.values()[..20].to_vec()).unwrap(),
        50,
        2,
    )
    .unwrap();
    assert_ne!(a.values()[20..], b.values()[20..]);
}
