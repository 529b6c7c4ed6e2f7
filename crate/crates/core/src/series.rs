//! Time series storage with model-index addressing.
//!
//! Observations are stored 0-based. Model indices run from `-origin` up to
//! `len - origin - 1`, so with `origin = m` the conditioning block is
//! `Y_{-m..-1}` and the modelled targets are `Y_0..Y_n`. [`TimeSeries::position`]
//! is the only place the two conventions meet.

use crate::error::{LmarError, Result};

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    sample_rate_hz: f64,
    origin: usize,
}

impl TimeSeries {
    /// Series sampled at the default 30 Hz, indexed from 0.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_origin(values, DEFAULT_SAMPLE_RATE_HZ, 0)
    }

    /// Series whose first `origin` observations carry negative model indices.
    pub fn with_origin(values: Vec<f64>, sample_rate_hz: f64, origin: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(LmarError::InvalidSeries("series is empty".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(LmarError::InvalidSeries(format!(
                "non-finite value at position {pos}"
            )));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(LmarError::InvalidSeries(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if origin >= values.len() {
            return Err(LmarError::InvalidSeries(format!(
                "origin {origin} leaves no observation at index 0 (length {})",
                values.len()
            )));
        }
        Ok(Self {
            values,
            sample_rate_hz,
            origin,
        })
    }

    /// Same observations, re-anchored so that the first `m` become `Y_{-m..-1}`.
    pub fn anchored(&self, m: usize) -> Result<Self> {
        Self::with_origin(self.values.clone(), self.sample_rate_hz, m)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    /// Smallest model index held (`-origin`).
    pub fn first_index(&self) -> isize {
        -(self.origin as isize)
    }

    /// Largest model index held (`n`).
    pub fn last_index(&self) -> isize {
        self.values.len() as isize - self.origin as isize - 1
    }

    /// Maps a model index to its storage position.
    pub fn position(&self, index: isize) -> Result<usize> {
        let pos = index + self.origin as isize;
        if pos < 0 || pos >= self.values.len() as isize {
            return Err(LmarError::IndexOutOfRange {
                index,
                lo: self.first_index(),
                hi: self.last_index(),
            });
        }
        Ok(pos as usize)
    }

    /// `Y_index`.
    pub fn get(&self, index: isize) -> Result<f64> {
        Ok(self.values[self.position(index)?])
    }

    /// Prefix ending at model index `last` (inclusive), same origin.
    pub fn truncated(&self, last: isize) -> Result<Self> {
        let pos = self.position(last)?;
        Self::with_origin(
            self.values[..=pos].to_vec(),
            self.sample_rate_hz,
            self.origin.min(pos),
        )
    }

    /// Returns a copy with every value mapped through `f`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::with_origin(
            self.values.iter().map(|&v| f(v)).collect(),
            self.sample_rate_hz,
            self.origin,
        )
    }
}
