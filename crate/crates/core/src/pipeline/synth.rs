//! Synthetic respiratory-like traces.
//!
//! Each breathing cycle is a raised cosine `A (1 - cos(2 pi tau / P)) / 2`
//! with its own amplitude `A` and period `P`, on top of a baseline that drifts
//! linearly plus a random walk. The scalar signal is laid onto three axes with
//! fixed loadings and independent white noise per axis.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{LmarError, Result};

/// Axis loadings before normalization (x, y, z).
pub const AXIS_LOADINGS: [f64; 3] = [0.995, 0.07, 0.07];

/// From `at_s` on, new cycles have their amplitude and period multiplied by
/// the given factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeChange {
    pub at_s: f64,
    pub amplitude_factor: f64,
    pub period_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub mean_period_s: f64,
    pub sd_period_s: f64,
    pub mean_amplitude_mm: f64,
    pub sd_amplitude_mm: f64,
    pub baseline_drift_mm_per_s: f64,
    /// Random-walk part of the baseline, in mm per sqrt(second).
    pub drift_walk_mm_per_sqrt_s: f64,
    pub noise_sd_mm: f64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub rng_seed: u64,
    pub regime_changes: Vec<RegimeChange>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            mean_period_s: 3.5,
            sd_period_s: 0.6,
            mean_amplitude_mm: 10.0,
            sd_amplitude_mm: 2.0,
            baseline_drift_mm_per_s: 0.02,
            drift_walk_mm_per_sqrt_s: 0.05,
            noise_sd_mm: 0.2,
            duration_s: 90.0,
            sample_rate_hz: 30.0,
            rng_seed: 0,
            regime_changes: Vec::new(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mean_period_s", self.mean_period_s),
            ("mean_amplitude_mm", self.mean_amplitude_mm),
            ("duration_s", self.duration_s),
            ("sample_rate_hz", self.sample_rate_hz),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(LmarError::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("sd_period_s", self.sd_period_s),
            ("sd_amplitude_mm", self.sd_amplitude_mm),
            ("drift_walk_mm_per_sqrt_s", self.drift_walk_mm_per_sqrt_s),
            ("noise_sd_mm", self.noise_sd_mm),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(LmarError::InvalidParameter(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        if !self.baseline_drift_mm_per_s.is_finite() {
            return Err(LmarError::InvalidParameter("baseline drift must be finite".into()));
        }
        for rc in &self.regime_changes {
            if !(rc.amplitude_factor > 0.0 && rc.period_factor > 0.0 && rc.at_s.is_finite()) {
                return Err(LmarError::InvalidParameter(format!(
                    "invalid regime change {rc:?}"
                )));
            }
        }
        if self.n_samples() < 2 {
            return Err(LmarError::InvalidParameter(
                "duration * sample rate must give at least 2 samples".into(),
            ));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round().max(0.0) as usize
    }

    fn factors_at(&self, t: f64) -> (f64, f64) {
        self.regime_changes
            .iter()
            .filter(|rc| t >= rc.at_s)
            .fold((1.0, 1.0), |(a, p), rc| {
                (a * rc.amplitude_factor, p * rc.period_factor)
            })
    }
}

/// A generated trace: the scalar breathing signal and its 3D embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTrace {
    pub sample_rate_hz: f64,
    /// Noise-free signal before projection onto the axes.
    pub signal: Vec<f64>,
    pub points: Vec<[f64; 3]>,
}

pub fn synth_trace(config: &SynthConfig) -> Result<SynthTrace> {
    config.validate()?;
    let n = config.n_samples();
    let dt = 1.0 / config.sample_rate_hz;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");

    let mut signal = Vec::with_capacity(n);
    let mut cycle_start = 0.0;
    let (mut amp, mut period) = draw_cycle(config, 0.0, &mut rng, &std);
    let mut walk = 0.0;
    for s in 0..n {
        let t = s as f64 * dt;
        while t - cycle_start >= period {
            cycle_start += period;
            (amp, period) = draw_cycle(config, cycle_start, &mut rng, &std);
        }
        let tau = t - cycle_start;
        let breath = 0.5 * amp * (1.0 - (2.0 * std::f64::consts::PI * tau / period).cos());
        if s > 0 {
            walk += config.drift_walk_mm_per_sqrt_s * dt.sqrt() * std.sample(&mut rng);
        }
        signal.push(breath + config.baseline_drift_mm_per_s * t + walk);
    }

    let norm = AXIS_LOADINGS.iter().map(|v| v * v).sum::<f64>().sqrt();
    let load = AXIS_LOADINGS.map(|v| v / norm);
    let points = signal
        .iter()
        .map(|&v| {
            [0, 1, 2].map(|a| load[a] * v + config.noise_sd_mm * std.sample(&mut rng))
        })
        .collect();
    Ok(SynthTrace {
        sample_rate_hz: config.sample_rate_hz,
        signal,
        points,
    })
}

fn draw_cycle(
    config: &SynthConfig,
    start: f64,
    rng: &mut ChaCha8Rng,
    std: &Normal<f64>,
) -> (f64, f64) {
    let (fa, fp) = config.factors_at(start);
    let amp = (config.mean_amplitude_mm + config.sd_amplitude_mm * std.sample(rng))
        .max(0.1 * config.mean_amplitude_mm);
    let period = (config.mean_period_s + config.sd_period_s * std.sample(rng))
        .max(0.3 * config.mean_period_s);
    (amp * fa, period * fp)
}
